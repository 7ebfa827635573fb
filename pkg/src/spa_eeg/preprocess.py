"""Band-pass filtering of EEG epochs.

The Butterworth design goes analog low-pass prototype -> analog band-pass
-> bilinear transform with prewarped band edges, and is realized as a
cascade of second-order sections.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .errors import FilterDesignError, ValidationError


@dataclass(frozen=True)
class BandpassSpec:
    fs: float
    low_hz: float = 8.0
    high_hz: float = 30.0
    order: int = 5

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz < self.fs / 2:
            raise FilterDesignError(
                f"need 0 < low ({self.low_hz}) < high ({self.high_hz}) < fs/2 ({self.fs / 2})"
            )
        if int(self.order) != self.order or self.order < 1:
            raise FilterDesignError(f"order must be a positive integer, got {self.order}")


@dataclass(frozen=True)
class BiquadCascade:
    """Second-order sections ``[b0, b1, b2, 1, a1, a2]`` and an overall gain."""

    sections: np.ndarray
    gain: float = 1.0

    @property
    def n_sections(self):
        return self.sections.shape[0]

    def sos(self):
        """Sections with the gain folded into the first, in scipy layout."""
        sos = np.array(self.sections, dtype=float, copy=True)
        sos[0, :3] *= self.gain
        return sos

    def poles(self):
        roots = [np.roots(sec[3:]) for sec in self.sections]
        return np.concatenate(roots) if roots else np.zeros(0, complex)


def _pair_conjugates(roots, tol=1e-9):
    # Returns a list of 2-element root groups: conjugate pairs, then real pairs.
    roots = list(roots)
    complex_ = sorted((r for r in roots if r.imag > tol), key=lambda r: (abs(r), r.real))
    reals = sorted((r.real for r in roots if abs(r.imag) <= tol))
    groups = [(r, r.conjugate()) for r in complex_]
    if len(reals) % 2:
        raise FilterDesignError("odd number of real poles")
    groups += [(reals[i], reals[i + 1]) for i in range(0, len(reals), 2)]
    return groups


def design_butterworth_bandpass(spec):
    """Digital Butterworth band-pass of ``2 * spec.order`` poles.

    The prewarped bilinear transform maps both band edges exactly, so the
    magnitude there is -3.0103 dB.
    """
    fs, n = float(spec.fs), int(spec.order)
    fs2 = 2.0 * fs
    w_lo = fs2 * np.tan(np.pi * spec.low_hz / fs)
    w_hi = fs2 * np.tan(np.pi * spec.high_hz / fs)
    bw = w_hi - w_lo
    w0_sq = w_lo * w_hi

    k = np.arange(n)
    proto = np.exp(1j * np.pi * (2 * k + n + 1) / (2 * n))
    half = proto * bw / 2.0
    disc = np.sqrt(half**2 - w0_sq + 0j)
    analog = np.concatenate([half + disc, half - disc])

    digital = (fs2 + analog) / (fs2 - analog)
    # n zeros at s=0 map to z=+1; n zeros at s=inf map to z=-1.
    gain = (bw**n) * np.real(fs2**n / np.prod(fs2 - analog))

    groups = _pair_conjugates(digital)
    # Poles farthest from the unit circle first.
    groups.sort(key=lambda g: max(abs(g[0]), abs(g[1])))
    sections = np.empty((len(groups), 6))
    for i, (p1, p2) in enumerate(groups):
        a1 = -np.real(p1 + p2)
        a2 = np.real(p1 * p2)
        sections[i] = [1.0, 0.0, -1.0, 1.0, a1, a2]
    cascade = BiquadCascade(sections, float(gain))
    if np.max(np.abs(cascade.poles())) >= 1.0 - 1e-6:
        raise FilterDesignError("designed filter is not stable")
    return cascade


def magnitude_response(cascade, f_hz, fs):
    """Magnitude in dB of the cascade at frequency ``f_hz`` (scalar or array)."""
    f = np.asarray(f_hz, dtype=float)
    z_inv = np.exp(-2j * np.pi * f / fs)
    h = np.full(f.shape, complex(cascade.gain))
    for b0, b1, b2, a0, a1, a2 in cascade.sections:
        h = h * (b0 + b1 * z_inv + b2 * z_inv**2) / (a0 + a1 * z_inv + a2 * z_inv**2)
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(h))


def pad_length(cascade):
    return 3 * (2 * cascade.n_sections + 1)


def _odd_extend(x, n):
    left = 2 * x[..., :1] - x[..., n:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-n - 2:-1]
    return np.concatenate([left, x, right], axis=-1)


def _forward_backward(sos, x):
    y = scipy.signal.sosfilt(sos, x, axis=-1)
    return scipy.signal.sosfilt(sos, y[..., ::-1], axis=-1)[..., ::-1]


def filtfilt(cascade, x):
    """Zero-phase forward-backward filtering along the last axis.

    The signal is odd-reflected by ``3 * (2 * n_sections + 1)`` samples on
    both ends and trimmed afterwards. Initial states for the two passes
    are chosen by Gustafsson's method: the least-squares states that make
    forward-backward and backward-forward filtering agree. The result
    therefore commutes with time reversal, which plain steady-state
    initialization only approximates.
    """
    x = np.asarray(x, dtype=float)
    pad = pad_length(cascade)
    if x.shape[-1] <= pad:
        raise ValidationError(
            f"signal of {x.shape[-1]} samples is too short for padding of {pad}"
        )
    sos = cascade.sos()
    ext = _odd_extend(x, pad)
    n = ext.shape[-1]
    n_states = 2 * cascade.n_sections

    # obs[:, j]: zero-input response to a unit initial state j.
    obs = np.empty((n, n_states))
    for j in range(n_states):
        zi = np.zeros(n_states)
        zi[j] = 1.0
        obs[:, j] = scipy.signal.sosfilt(sos, np.zeros(n), zi=zi.reshape(-1, 2))[0]
    s = scipy.signal.sosfilt(sos, obs[::-1], axis=0)
    m = np.hstack((s[::-1] - obs, obs[::-1] - s))
    w = np.hstack((s[::-1], obs[::-1]))

    y_fb = _forward_backward(sos, ext)
    y_bf = _forward_backward(sos, ext[..., ::-1])[..., ::-1]
    delta = (y_bf - y_fb).reshape(-1, n).T
    ic = np.linalg.lstsq(m, delta, rcond=None)[0]
    y = y_fb + (w @ ic).T.reshape(ext.shape)
    return np.ascontiguousarray(y[..., pad:-pad])


def causal_filter(cascade, x):
    """Single forward pass, as an online system would apply it."""
    return scipy.signal.sosfilt(cascade.sos(), np.asarray(x, dtype=float), axis=-1)


def preprocess_set(epochs, spec=None, crop=None, mode="zero-phase"):
    """Band-pass every channel of every trial, then optionally crop.

    Parameters
    ----------
    epochs : EpochSet
    spec : BandpassSpec, optional
        Defaults to 8-30 Hz, order 5 at the set's sampling rate.
    crop : (float, float), optional
        Seconds from the start of each filtered trial to keep. Filtering a
        longer segment and cropping keeps edge transients out of the window.
    mode : {"zero-phase", "causal"}
    """
    spec = spec or BandpassSpec(fs=epochs.fs)
    if spec.fs != epochs.fs:
        raise ValidationError(f"filter designed for {spec.fs} Hz, data at {epochs.fs} Hz")
    cascade = design_butterworth_bandpass(spec)
    if mode == "zero-phase":
        data = filtfilt(cascade, epochs.data)
    elif mode == "causal":
        data = causal_filter(cascade, epochs.data)
    else:
        raise ValueError(f"unknown filter mode {mode!r}")
    if crop is not None:
        start = int(np.floor(crop[0] * epochs.fs + 0.5))
        stop = start + int(np.floor((crop[1] - crop[0]) * epochs.fs + 0.5))
        if start < 0 or stop > data.shape[-1] or stop <= start:
            raise ValidationError(f"crop {crop} outside trial of {data.shape[-1]} samples")
        data = data[..., start:stop]
    return epochs.replace(data=np.ascontiguousarray(data))
