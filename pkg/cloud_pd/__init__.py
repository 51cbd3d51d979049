"""Cloud-assisted asynchronous primal-dual optimization."""
