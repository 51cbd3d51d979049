from __future__ import annotations

import sys

from cloud_pd.app import main

if __name__ == "__main__":
    sys.exit(main())
