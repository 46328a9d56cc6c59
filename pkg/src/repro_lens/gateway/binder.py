"""Binder launch-link construction for hosted repositories."""

from __future__ import annotations

from urllib.parse import quote

from ..ingest import InvalidRepoUrl, parse_repo_url

BINDER_BASE = "https://mybinder.org/v2"


class UnsupportedHost(Exception):
    pass


def binder_link(url: str, ref: str, notebook_path: str) -> str:
    """https://mybinder.org/v2/gh/<owner>/<name>/<ref>?filepath=<encoded path>"""
    try:
        location = parse_repo_url(url)
    except InvalidRepoUrl as exc:
        raise UnsupportedHost(str(exc)) from exc
    if location.kind != "github":
        raise UnsupportedHost(f"{url}: Binder links are built for hosted repositories only")
    filepath = quote(notebook_path, safe="")
    return f"{BINDER_BASE}/gh/{location.owner}/{location.name}/{ref}?filepath={filepath}"
