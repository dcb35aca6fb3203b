"""Line-oriented rendezvous wire protocol.

A record is one ASCII line of space-separated ``key=value`` tokens terminated
by ``\\n``; the first token is always ``cmd=<name>``. Token values are
percent-encoded: every byte outside 0x21..0x7E, plus ``=`` and ``%``, is
written as ``%XX`` (upper-case hex) of its UTF-8 encoding.
"""

from src.core.errors import ProtocolError

MAX_KEY_BYTES = 256
MAX_VALUE_BYTES = 4096
# cmd + key + value tokens with separators; anything longer is malformed
MAX_LINE_BYTES = MAX_KEY_BYTES + MAX_VALUE_BYTES + 64

ENV_PORT = "RDV_PORT"
ENV_RANK = "RDV_RANK"
ENV_GROUP = "RDV_GROUP"
DEFAULT_GROUP = "world"

# init_err reasons
UNKNOWN_GROUP = "unknown_group"
DUPLICATE_RANK = "duplicate_rank"
RANK_OUT_OF_RANGE = "rank_out_of_range"
ALREADY_INITIALIZED = "already_initialized"
GROUP_FAILED = "group_failed"
# put_err reasons
DUPLICATE_KEY = "duplicate_key"
# group_err reasons
PEER_DISCONNECTED = "peer_disconnected"
PEER_FINALIZED = "peer_finalized"
PEER_FAILED = "peer_failed"
SERVER_SHUTDOWN = "server_shutdown"
# cmd=error reasons
MALFORMED = "malformed"
UNKNOWN_COMMAND = "unknown_command"
NOT_INITIALIZED = "not_initialized"
KEY_TOO_LONG = "key_too_long"
VALUE_TOO_LONG = "value_too_long"

_SAFE = frozenset(b for b in range(0x21, 0x7F) if b not in (0x25, 0x3D))
_HEX = frozenset("0123456789abcdefABCDEF")


def encode(text: str) -> str:
    """Percent-encode a string for use as a token value."""
    return "".join(chr(b) if b in _SAFE else f"%{b:02X}" for b in text.encode("utf-8"))


def decode(token: str) -> str:
    """Decode a percent-encoded token value.

    Raises:
        ProtocolError: On a bad escape, a raw unsafe byte or invalid UTF-8
    """
    raw = bytearray()
    i = 0
    while i < len(token):
        c = token[i]
        if c == "%":
            digits = token[i + 1 : i + 3]
            if len(digits) != 2 or not set(digits) <= _HEX:
                raise ProtocolError(f"bad percent escape in {token!r}")
            raw.append(int(digits, 16))
            i += 3
            continue
        b = ord(c)
        if b not in _SAFE:
            raise ProtocolError(f"unescaped byte 0x{b:02X} in {token!r}")
        raw.append(b)
        i += 1
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ProtocolError(f"token is not UTF-8: {token!r}") from e


def format_record(cmd: str, *fields: tuple[str, str]) -> bytes:
    """Build one wire line; field values must already be encoded."""
    tokens = [f"cmd={cmd}"] + [f"{name}={value}" for name, value in fields]
    return (" ".join(tokens) + "\n").encode("ascii")


def parse_record(line: bytes) -> tuple[str, dict[str, str]]:
    """Split a wire line into its command and (still encoded) fields.

    Raises:
        ProtocolError: If the line is not a well-formed record
    """
    if not line.endswith(b"\n"):
        raise ProtocolError("record not newline-terminated")
    try:
        text = line[:-1].decode("ascii")
    except UnicodeDecodeError as e:
        raise ProtocolError("record contains non-ASCII bytes") from e

    tokens = text.split(" ")
    fields: dict[str, str] = {}
    for token in tokens:
        name, sep, value = token.partition("=")
        if not sep or not name or name in fields:
            raise ProtocolError(f"malformed token {token!r}")
        fields[name] = value

    if tokens[0].partition("=")[0] != "cmd":
        raise ProtocolError("first token must be cmd=...")
    cmd = fields.pop("cmd")
    if not cmd:
        raise ProtocolError("empty command")
    return cmd, fields
