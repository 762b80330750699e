"""Address geocoding and static street/satellite image retrieval.

Two interchangeable backends: a live HTTP provider configured by URL
templates (API key read from an environment variable) and a fully
offline fixture provider backed by a local directory. Fetched bytes are
cached on disk under cache/<address_id>/<view>.<ext> with an index of
content hashes; a global rate limiter bounds provider calls.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

import requests

from .portfolio import AddressEntry

VIEWS = ("street", "satellite")


class ImageryError(Exception):
    pass


class RetriableProviderError(ImageryError):
    """Transient provider/network failure; the request may be retried."""


class MissingImagery(Exception):
    """The provider has no imagery for this location. This is data, not a
    failure: it feeds the street-view quality 'missing' annotation."""


@dataclass(frozen=True)
class ImageRequest:
    address_id: str
    view: str
    width: int = 640
    height: int = 640
    heading: float = 0.0
    pitch: float = 0.0
    zoom: int = 18

    def __post_init__(self) -> None:
        if self.view not in VIEWS:
            raise ImageryError(f"view must be one of {VIEWS}, got {self.view!r}")
        if not (1 <= self.width <= 2048 and 1 <= self.height <= 2048):
            raise ImageryError(f"size {self.width}x{self.height} outside provider limits")


@dataclass(frozen=True)
class CachedImage:
    address_id: str
    view: str
    content_hash: str
    fetch_timestamp: float
    provider: str
    path: Path


@dataclass(frozen=True)
class GeocodeHit:
    lat: float
    lon: float
    country: str


class Provider(Protocol):
    name: str

    def geocode(self, raw_address: str) -> Optional[GeocodeHit]: ...

    def fetch(self, entry: AddressEntry, request: ImageRequest) -> bytes: ...


class RateLimiter:
    """Global requests-per-second budget; thread safe. Clock and sleep are
    injectable so tests can run on a fake clock."""

    def __init__(
        self,
        per_second: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if per_second <= 0:
            raise ImageryError("rate must be positive")
        self.interval = 1.0 / per_second
        self._clock = clock
        self._sleep = sleep
        self._next_allowed = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next_allowed - now
            self._next_allowed = max(self._next_allowed, now) + self.interval
        if wait > 0:
            self._sleep(wait)


class FixtureProvider:
    """Offline backend: a geocode table (JSON) plus an images directory
    laid out as images/<address_id>/<view>.png. Addresses absent from the
    table are unresolved; absent image files are missing imagery."""

    name = "fixture"

    def __init__(self, root):
        self.root = Path(root)
        table_path = self.root / "geocode_table.json"
        self.table: dict[str, dict] = (
            json.loads(table_path.read_text()) if table_path.exists() else {}
        )

    def geocode(self, raw_address: str) -> Optional[GeocodeHit]:
        hit = self.table.get(raw_address)
        if hit is None:
            return None
        return GeocodeHit(lat=hit["lat"], lon=hit["lon"], country=hit.get("country", "PL"))

    def fetch(self, entry: AddressEntry, request: ImageRequest) -> bytes:
        path = self.root / "images" / entry.address_id / f"{request.view}.png"
        if not path.exists():
            raise MissingImagery(f"no {request.view} fixture for {entry.address_id}")
        return path.read_bytes()


class LiveProvider:
    """HTTP static-image backend driven by URL templates.

    Config keys: geocode_url, street_url, satellite_url (format templates
    with {key}, {address}, {lat}, {lon}, {width}, {height}, {heading},
    {pitch}, {zoom}) and api_key_env naming the environment variable that
    holds the key.
    """

    name = "live"

    def __init__(self, config: dict, session: Optional[requests.Session] = None):
        self.config = config
        self.session = session or requests.Session()
        key_env = config.get("api_key_env", "HOUSERISK_IMAGERY_KEY")
        self.api_key = os.environ.get(key_env, "")

    def geocode(self, raw_address: str) -> Optional[GeocodeHit]:
        url = self.config["geocode_url"].format(key=self.api_key, address=raw_address)
        try:
            response = self.session.get(url, timeout=30)
        except requests.RequestException as exc:
            raise RetriableProviderError(str(exc)) from exc
        if response.status_code >= 500:
            raise RetriableProviderError(f"geocode HTTP {response.status_code}")
        if response.status_code != 200:
            return None
        payload = response.json()
        results = payload.get("results") or []
        if not results:
            return None
        top = results[0]
        return GeocodeHit(lat=top["lat"], lon=top["lon"], country=top.get("country", ""))

    def fetch(self, entry: AddressEntry, request: ImageRequest) -> bytes:
        lat, lon = entry.location
        template = self.config[f"{request.view}_url"]
        url = template.format(
            key=self.api_key,
            lat=lat,
            lon=lon,
            width=request.width,
            height=request.height,
            heading=request.heading,
            pitch=request.pitch,
            zoom=request.zoom,
        )
        try:
            response = self.session.get(url, timeout=60)
        except requests.RequestException as exc:
            raise RetriableProviderError(str(exc)) from exc
        if response.status_code == 404:
            raise MissingImagery(f"provider reports no imagery at {lat},{lon}")
        if response.status_code != 200:
            raise RetriableProviderError(f"image HTTP {response.status_code}")
        return response.content


def geocode(
    raw_address: str,
    provider: Provider,
    domestic_country: str = "PL",
    address_id: Optional[str] = None,
) -> AddressEntry:
    """Resolve an address string; non-domestic hits come back with status
    'foreign', misses with 'unresolved'."""
    if not raw_address or not raw_address.strip():
        raise ImageryError("empty address")
    if address_id is None:
        address_id = hashlib.sha1(raw_address.encode()).hexdigest()[:12]
    hit = provider.geocode(raw_address)
    if hit is None:
        return AddressEntry(address_id=address_id, raw_address=raw_address, status="unresolved")
    if domestic_country and hit.country and hit.country != domestic_country:
        return AddressEntry(address_id=address_id, raw_address=raw_address, status="foreign")
    return AddressEntry(
        address_id=address_id,
        raw_address=raw_address,
        status="resolved",
        location=(hit.lat, hit.lon),
    )


class ImageCache:
    """Disk cache keyed by (address_id, view) with hash-verified bytes."""

    def __init__(self, root, provider: Provider, rate_limiter: Optional[RateLimiter] = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.provider = provider
        self.rate_limiter = rate_limiter
        self.index_path = self.root / "index.json"
        self._index: dict[str, dict] = (
            json.loads(self.index_path.read_text()) if self.index_path.exists() else {}
        )
        self._lock = threading.Lock()
        self._entry_locks: dict[str, threading.Lock] = {}
        self.provider_calls = 0

    def _key(self, address_id: str, view: str) -> str:
        return f"{address_id}/{view}"

    def _entry_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._entry_locks.setdefault(key, threading.Lock())

    def _record(self, key: str) -> Optional[CachedImage]:
        d = self._index.get(key)
        if d is None:
            return None
        path = self.root / d["path"]
        if not path.exists():
            return None
        return CachedImage(
            address_id=d["address_id"],
            view=d["view"],
            content_hash=d["content_hash"],
            fetch_timestamp=d["fetch_timestamp"],
            provider=d["provider"],
            path=path,
        )

    def get(self, address_id: str, view: str) -> Optional[CachedImage]:
        return self._record(self._key(address_id, view))

    def fetch_image(self, entry: AddressEntry, request: ImageRequest) -> CachedImage:
        """Serve from cache, or fetch, hash, persist, and index.

        MissingImagery propagates; it is a valid annotation outcome, and
        is deliberately not cached as an image.
        """
        if entry.status != "resolved" and isinstance(self.provider, LiveProvider):
            raise ImageryError(f"address {entry.address_id} is not resolved")
        key = self._key(entry.address_id, request.view)
        with self._entry_lock(key):
            cached = self._record(key)
            if cached is not None:
                return cached
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            self.provider_calls += 1
            content = self.provider.fetch(entry, request)
            digest = hashlib.sha256(content).hexdigest()
            rel = Path(entry.address_id) / f"{request.view}.png"
            path = self.root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(content)
            record = {
                "address_id": entry.address_id,
                "view": request.view,
                "content_hash": digest,
                "fetch_timestamp": time.time(),
                "provider": self.provider.name,
                "path": str(rel),
            }
            with self._lock:
                self._index[key] = record
                self.index_path.write_text(json.dumps(self._index, indent=2, sort_keys=True))
            return self._record(key)

    def verify(self, cached: CachedImage) -> bool:
        return hashlib.sha256(cached.path.read_bytes()).hexdigest() == cached.content_hash


def write_fixture_image(root, address_id: str, view: str, color=(128, 160, 96)) -> Path:
    """Create a small deterministic PNG fixture for tests and demos."""
    from PIL import Image

    path = Path(root) / "images" / address_id / f"{view}.png"
    path.parent.mkdir(parents=True, exist_ok=True)
    seed = int(hashlib.sha256(f"{address_id}/{view}".encode()).hexdigest()[:6], 16)
    shade = tuple((c + seed // (i + 1)) % 256 for i, c in enumerate(color))
    Image.new("RGB", (8, 8), shade).save(path, format="PNG")
    return path
