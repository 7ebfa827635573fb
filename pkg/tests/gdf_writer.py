"""Minimal GDF 2.x encoder used to build reader fixtures."""

import numpy as np

_DTYPES = {3: "<i2", 16: "<f4"}


def encode_gdf(signal, fs, events=(), labels=None, gdf_type=3, spr=None,
               phys_range=(-100.0, 100.0), event_mode=1, n_records_field=None,
               version=b"GDF 2.20"):
    """Encode ``signal`` (channels x samples) as GDF bytes.

    ``events`` are ``(sample_index, code)`` pairs with 0-based indices.
    Int16 files quantize ``phys_range`` onto the full digital range.
    Returns ``(bytes, physical_signal_as_stored)``.
    """
    signal = np.asarray(signal, dtype=float)
    ns, n = signal.shape
    spr = n if spr is None else spr
    if n % spr:
        raise ValueError("sample count must be a multiple of spr")
    n_rec = n // spr
    labels = labels or [f"ch{i}" for i in range(ns)]
    pmin, pmax = phys_range
    if gdf_type == 3:
        dmin, dmax = -32768.0, 32767.0
        gain = (pmax - pmin) / (dmax - dmin)
        digital = np.clip(np.round((signal - pmin) / gain + dmin), dmin, dmax).astype("<i2")
        stored = pmin + (digital.astype(float) - dmin) * gain
    else:
        dmin, dmax = pmin, pmax
        digital = signal.astype("<f4")
        stored = digital.astype(float)

    fixed = bytearray(256)
    fixed[0:8] = version
    fixed[184:186] = np.uint16(ns + 1).tobytes()
    n_field = n_rec if n_records_field is None else n_records_field
    fixed[236:244] = np.int64(n_field).tobytes()
    # Record duration as a rational number of seconds: spr / fs.
    num, den = _rational(spr / fs)
    fixed[244:252] = np.array([num, den], "<u4").tobytes()
    fixed[252:254] = np.uint16(ns).tobytes()

    def field(values, width):
        out = bytearray()
        for v in values:
            b = v.encode("latin-1") if isinstance(v, str) else bytes(v)
            out += b[:width].ljust(width, b"\x00")
        return out

    var = bytearray()
    var += field(labels, 16)
    var += field(["EEG"] * ns, 80)
    var += field(["uV"] * ns, 6)
    var += np.full(ns, 4275, "<u2").tobytes()
    var += np.full(ns, pmin, "<f8").tobytes()
    var += np.full(ns, pmax, "<f8").tobytes()
    var += np.full(ns, dmin, "<f8").tobytes()
    var += np.full(ns, dmax, "<f8").tobytes()
    var += field([""] * ns, 68)
    var += np.zeros(3 * ns, "<f4").tobytes()
    var += np.full(ns, spr, "<u4").tobytes()
    var += np.full(ns, gdf_type, "<u4").tobytes()
    var += bytes(32 * ns)
    assert len(var) == 256 * ns

    recs = bytearray()
    for r in range(n_rec):
        for c in range(ns):
            recs += digital[c, r * spr:(r + 1) * spr].astype(_DTYPES[gdf_type]).tobytes()

    ev = bytearray()
    events = list(events)
    if events:
        pos = np.array([e[0] + 1 for e in events], "<u4")
        typ = np.array([e[1] for e in events], "<u2")
        ev += bytes([event_mode]) + len(events).to_bytes(3, "little")
        ev += np.float32(fs).tobytes()
        ev += pos.tobytes() + typ.tobytes()
        if event_mode == 3:
            ev += np.zeros(len(events), "<u2").tobytes()
            ev += np.zeros(len(events), "<u4").tobytes()
    return bytes(fixed + var + recs + ev), stored


def _rational(x):
    from fractions import Fraction

    f = Fraction(x).limit_denominator(100000)
    return f.numerator, f.denominator
