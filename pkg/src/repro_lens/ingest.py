"""Repository fetching, notebook enumeration, and manifest discovery.

Remote repositories are fetched through the hosting service's REST v3 API
(metadata, ref resolution, commit tarball); local directories are accepted
too so fixture repositories run through the identical pipeline. A snapshot
is one materialized tree under a job-scoped directory.
"""

from __future__ import annotations

import hashlib
import io
import os
import shutil
import tarfile
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Callable, Optional
from urllib.parse import urlparse

from .notebook import NotebookError, Notebook, parse_notebook

TOKEN_ENV_VAR = "REPRO_LENS_TOKEN"


class IngestError(Exception):
    pass


class InvalidRepoUrl(IngestError):
    pass


class RepoNotFound(IngestError):
    pass


class RefNotFound(IngestError):
    pass


class NetworkFailure(IngestError):
    pass


class RateLimited(IngestError):
    def __init__(self, message: str, retry_after_seconds: int) -> None:
        super().__init__(message)
        self.retry_after_seconds = retry_after_seconds


class ManifestKind(Enum):
    ENVIRONMENT_YML = "environment.yml"
    REQUIREMENTS_TXT = "requirements.txt"
    PIPFILE = "Pipfile"
    SETUP_PY = "setup.py"


# precedence when several manifests coexist: most specific first
_MANIFEST_PRECEDENCE = {
    ManifestKind.ENVIRONMENT_YML: 0,
    ManifestKind.REQUIREMENTS_TXT: 1,
    ManifestKind.PIPFILE: 2,
    ManifestKind.SETUP_PY: 3,
}

_MANIFEST_BY_NAME = {kind.value: kind for kind in ManifestKind}


@dataclass(frozen=True)
class ManifestRef:
    kind: ManifestKind
    path: str  # repo-relative, posix separators


@dataclass(frozen=True)
class RepositorySnapshot:
    url: str
    ref: str
    root: Path
    notebook_entries: tuple[tuple[str, int], ...]
    manifest_entries: tuple[ManifestRef, ...]


@dataclass(frozen=True)
class HttpResponse:
    status: int
    headers: dict[str, str]
    body: bytes


HttpGet = Callable[[str, dict[str, str]], HttpResponse]


def _requests_get(url: str, headers: dict[str, str]) -> HttpResponse:
    import requests

    try:
        response = requests.get(url, headers=headers, timeout=60, allow_redirects=True)
    except requests.RequestException as exc:
        raise NetworkFailure(f"GET {url}: {exc}") from exc
    return HttpResponse(
        status=response.status_code,
        headers={k.lower(): v for k, v in response.headers.items()},
        body=response.content,
    )


class GitHubApi:
    """Minimal REST v3 client: repo metadata, ref resolution, tarballs."""

    def __init__(
        self,
        http: HttpGet | None = None,
        token: Optional[str] = None,
        base_url: str = "https://api.github.com",
    ) -> None:
        self.http = http or _requests_get
        self.token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        self.base_url = base_url.rstrip("/")

    def _headers(self) -> dict[str, str]:
        headers = {
            "Accept": "application/vnd.github+json",
            "User-Agent": "repro-lens",
        }
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def _get(self, path: str, not_found: type[IngestError]) -> HttpResponse:
        response = self.http(f"{self.base_url}{path}", self._headers())
        if response.status == 404:
            raise not_found(f"{path}: not found")
        if response.status in (403, 429) and response.headers.get("x-ratelimit-remaining") == "0":
            retry_after = response.headers.get("retry-after")
            if retry_after is not None:
                seconds = int(retry_after)
            else:
                reset = int(response.headers.get("x-ratelimit-reset", "0"))
                seconds = max(0, reset - int(time.time()))
            raise RateLimited(f"{path}: rate limited", retry_after_seconds=seconds)
        if response.status == 422:
            raise not_found(f"{path}: unprocessable reference")
        if response.status >= 400:
            raise NetworkFailure(f"{path}: HTTP {response.status}")
        return response

    def default_branch(self, owner: str, name: str) -> str:
        import json

        body = self._get(f"/repos/{owner}/{name}", RepoNotFound).body
        return json.loads(body.decode("utf-8")).get("default_branch", "main")

    def resolve_commit(self, owner: str, name: str, ref: str) -> str:
        import json

        body = self._get(f"/repos/{owner}/{name}/commits/{ref}", RefNotFound).body
        sha = json.loads(body.decode("utf-8")).get("sha")
        if not isinstance(sha, str) or not sha:
            raise RefNotFound(f"{ref}: no commit hash in response")
        return sha

    def tarball(self, owner: str, name: str, sha: str) -> bytes:
        return self._get(f"/repos/{owner}/{name}/tarball/{sha}", RefNotFound).body


@dataclass(frozen=True)
class RepoLocation:
    kind: str  # "github" | "local"
    owner: str = ""
    name: str = ""
    local_path: Optional[Path] = None


def parse_repo_url(url: str) -> RepoLocation:
    """Accepts host/owner/name hosting URLs and local directories."""
    url = url.strip()
    if not url:
        raise InvalidRepoUrl("empty repository URL")
    if url.startswith("file://"):
        path = Path(urlparse(url).path)
        return RepoLocation(kind="local", local_path=path)
    candidate = url if "://" in url else f"https://{url}"
    parsed = urlparse(candidate)
    host = (parsed.netloc or "").lower()
    if host in ("github.com", "www.github.com"):
        parts = [p for p in parsed.path.split("/") if p]
        if len(parts) < 2:
            raise InvalidRepoUrl(f"{url}: expected host/owner/name")
        owner, name = parts[0], parts[1]
        if name.endswith(".git"):
            name = name[: -len(".git")]
        return RepoLocation(kind="github", owner=owner, name=name)
    if os.path.sep in url or url.startswith("."):
        return RepoLocation(kind="local", local_path=Path(url))
    raise InvalidRepoUrl(f"{url}: not a recognized repository URL")


def _is_hidden_dir(name: str) -> bool:
    return name.startswith(".")


def _walk_tree(root: Path) -> tuple[tuple[tuple[str, int], ...], tuple[ManifestRef, ...]]:
    notebooks: list[tuple[str, int]] = []
    manifests: list[ManifestRef] = []
    for dirpath, dirnames, filenames in os.walk(root):
        # never descend into hidden or checkpoint directories
        dirnames[:] = sorted(d for d in dirnames if not _is_hidden_dir(d) and d != ".ipynb_checkpoints")
        for filename in sorted(filenames):
            full = Path(dirpath) / filename
            rel = str(PurePosixPath(full.relative_to(root).as_posix()))
            if filename.endswith(".ipynb"):
                notebooks.append((rel, full.stat().st_size))
            kind = _MANIFEST_BY_NAME.get(filename)
            if kind is not None:
                manifests.append(ManifestRef(kind=kind, path=rel))
    notebooks.sort(key=lambda e: e[0])
    manifests.sort(key=lambda m: (_MANIFEST_PRECEDENCE[m.kind], m.path.count("/"), m.path))
    return tuple(notebooks), tuple(manifests)


def _safe_extract_tarball(blob: bytes, dest: Path) -> None:
    """Extract a hosting-service tarball, stripping its single top directory."""
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:*") as tar:
        for member in tar.getmembers():
            parts = PurePosixPath(member.name).parts
            if len(parts) <= 1:
                continue
            stripped = PurePosixPath(*parts[1:])
            if stripped.is_absolute() or ".." in stripped.parts:
                continue
            target = dest / stripped
            if member.isdir():
                target.mkdir(parents=True, exist_ok=True)
            elif member.isfile():
                target.parent.mkdir(parents=True, exist_ok=True)
                extracted = tar.extractfile(member)
                if extracted is not None:
                    target.write_bytes(extracted.read())
            # links and specials are dropped


def _tree_digest(root: Path) -> str:
    """Deterministic content hash of a directory tree (local 'commit')."""
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d != ".git")
        for filename in sorted(filenames):
            full = Path(dirpath) / filename
            rel = full.relative_to(root).as_posix()
            digest.update(rel.encode("utf-8"))
            digest.update(b"\0")
            digest.update(hashlib.sha256(full.read_bytes()).digest())
            digest.update(b"\0")
    return digest.hexdigest()


def fetch_repository(
    url: str,
    ref: Optional[str],
    jobdir: Path,
    api: GitHubApi | None = None,
) -> RepositorySnapshot:
    """Materialize one repository tree under ``jobdir/repo``.

    The default ref is the host's default branch; the returned snapshot
    carries the resolved commit hash, never a branch name. Read-only with
    respect to the remote.
    """
    location = parse_repo_url(url)
    root = Path(jobdir) / "repo"
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)

    if location.kind == "local":
        source = location.local_path
        assert source is not None
        if not source.is_dir():
            raise RepoNotFound(f"{source}: not a directory")
        for item in source.iterdir():
            if item.name == ".git":
                continue
            if item.is_dir():
                shutil.copytree(item, root / item.name, symlinks=False)
            else:
                shutil.copy2(item, root / item.name)
        resolved = _tree_digest(root)
    else:
        api = api or GitHubApi()
        requested = ref or api.default_branch(location.owner, location.name)
        resolved = api.resolve_commit(location.owner, location.name, requested)
        blob = api.tarball(location.owner, location.name, resolved)
        _safe_extract_tarball(blob, root)

    notebooks, manifests = _walk_tree(root)
    return RepositorySnapshot(
        url=url,
        ref=resolved,
        root=root,
        notebook_entries=notebooks,
        manifest_entries=manifests,
    )


def scan_notebooks(snapshot: RepositorySnapshot) -> list[tuple[str, Notebook | NotebookError]]:
    """One entry per notebook file in lexicographic path order.

    Parse failures are captured per file; the scan itself never raises.
    """
    results: list[tuple[str, Notebook | NotebookError]] = []
    for rel, _size in snapshot.notebook_entries:
        raw = (snapshot.root / rel).read_bytes()
        try:
            results.append((rel, parse_notebook(raw, path=rel)))
        except NotebookError as exc:
            results.append((rel, exc))
    return results


def discover_environment(snapshot: RepositorySnapshot) -> list[ManifestRef]:
    """Manifests ordered by precedence, then path depth, then lexicographic."""
    return sorted(
        snapshot.manifest_entries,
        key=lambda m: (_MANIFEST_PRECEDENCE[m.kind], m.path.count("/"), m.path),
    )
