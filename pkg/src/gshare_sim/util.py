"""Small shared helpers."""


def fmt_num(value: float) -> str:
    """Canonical text form of a number: integral floats drop the trailing .0,
    everything else uses repr (which round-trips Python floats exactly)."""
    f = float(value)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)
