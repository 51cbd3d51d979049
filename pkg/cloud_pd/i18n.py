from __future__ import annotations

import json
import logging
import os
from functools import lru_cache
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_LANG = "en"
TRANSLATIONS_DIR = Path(__file__).resolve().parent / "translations"
_current_lang = os.getenv("CLOUDPD_LANG", DEFAULT_LANG)


@lru_cache(maxsize=None)
def _catalog(lang: str) -> dict[str, str]:
    catalog_path = TRANSLATIONS_DIR / f"{lang}.json"
    if not catalog_path.exists():
        catalog_path = TRANSLATIONS_DIR / f"{DEFAULT_LANG}.json"
    try:
        return json.loads(catalog_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as read_error:
        logger.warning("message catalog %s unreadable: %s", catalog_path, read_error)
        return {}


def t(key: str, **kwargs) -> str:
    template = _catalog(_current_lang).get(key)
    if template is None:
        template = _catalog(DEFAULT_LANG).get(key, key)
    if not kwargs:
        return template
    try:
        return template.format(**kwargs)
    except (KeyError, IndexError, ValueError):
        logger.debug("message %s could not be formatted with %s", key, sorted(kwargs))
        return template


def set_language(lang: str) -> str:
    global _current_lang
    if not (TRANSLATIONS_DIR / f"{lang}.json").exists():
        lang = DEFAULT_LANG
    _current_lang = lang
    _catalog.cache_clear()
    return _current_lang


def current_language() -> str:
    return _current_lang


def available_languages() -> dict[str, str]:
    languages: dict[str, str] = {}
    for catalog_path in sorted(TRANSLATIONS_DIR.glob("*.json")):
        try:
            entries = json.loads(catalog_path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            entries = {}
        languages[catalog_path.stem] = entries.get("language.name", catalog_path.stem.upper())
    return languages or {DEFAULT_LANG: DEFAULT_LANG.upper()}
