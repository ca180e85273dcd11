import hashlib
import re
from pathlib import Path
from typing import Iterable

from reuse_tracer.exceptions import MalformedKeyError

SHA1_PATTERN = r"^[0-9a-f]{40}$"
TIME_WIDTH = 10

_sha1_re = re.compile(SHA1_PATTERN)


def git_blob_sha1(data: bytes) -> str:
    """Digest git assigns to a blob with the given content."""
    header = f"blob {len(data)}\0".encode()
    return hashlib.sha1(header + data).hexdigest()


EMPTY_BLOB = git_blob_sha1(b"")


def is_sha1(value: str) -> bool:
    return _sha1_re.match(value) is not None


def check_sha1(value: str) -> str:
    if not is_sha1(value):
        raise MalformedKeyError(f"Not a lowercase sha1 hex digest: {value!r}")
    return value


def pad_time(value: int) -> str:
    """Zero-pad a timestamp so byte-wise order equals numeric order."""
    return str(value).zfill(TIME_WIDTH)


def _percent(char: str) -> str:
    code = ord(char)
    if 0xDC80 <= code <= 0xDCFF:
        data = bytes([code - 0xDC00])
    else:
        data = char.encode("utf-8", "surrogatepass")
    return "".join(f"%{byte:02X}" for byte in data)


def encode_path(path: str) -> str:
    """
    Percent-encode ';', '%', control characters and surrogates in a diagnostic path.

    Undecodable bytes carried as surrogate escapes come out as their original byte.
    """
    return "".join(
        _percent(c) if c in ";%" or ord(c) < 0x20 or ord(c) == 0x7F or 0xD800 <= ord(c) <= 0xDFFF else c
        for c in path
    )


def digest(parts: Iterable[str | bytes]) -> str:
    h = hashlib.sha1()
    for part in parts:
        h.update(part.encode() if isinstance(part, str) else part)
        h.update(b"\0")
    return h.hexdigest()


def file_digest(path: Path) -> str:
    with path.open("rb") as f:
        return hashlib.file_digest(f, "sha1").hexdigest()
