"""Pulse-sequence description language.

A sequence file is line oriented::

    # comment
    sequence cpmg_demo
    segment A 17040ns repeat 11737
      laser @0ns 5000ns power=8.0mW
      mw @6000ns 20ns amplitude=1.0 phase=0.0

``segment <label> <duration> [repeat <n>]`` opens a segment; every
following event line ``<channel> @<start> <duration> [key=value ...]``
belongs to it. Times take ns/us/ms/s suffixes and are stored as integer
nanoseconds. Channels are ``laser`` (``power`` in mW, W or uW), ``mw``
(``amplitude``, ``phase`` in rad, ``detuning`` and ``frequency`` in
Hz/kHz/MHz/GHz) and ``sync`` (no attributes).

:func:`format_sequence` is the canonical printer: times in ns, keys sorted,
one event per line. ``parse_sequence(format_sequence(s)) == s``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

CHANNELS = ("laser", "mw", "sync")
ALLOWED_KEYS = {
    "laser": frozenset({"power"}),
    "mw": frozenset({"amplitude", "phase", "detuning", "frequency"}),
    "sync": frozenset(),
}
REQUIRED_KEYS = {"laser": frozenset({"power"}), "mw": frozenset(), "sync": frozenset()}
ALLOWED_SEGMENT_COUNTS = (1, 2, 4)
SEGMENT_TIME_NS = 200_000_000

_TIME_UNITS = {"ns": 1, "us": 1_000, "µs": 1_000, "ms": 1_000_000, "s": 1_000_000_000}
_ATTR_UNITS = {
    "power": ({"mW": 1.0, "W": 1e3, "uW": 1e-3, "µW": 1e-3}, "mW"),
    "detuning": ({"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}, "Hz"),
    "frequency": ({"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}, "Hz"),
    "phase": ({"": 1.0, "rad": 1.0}, ""),
    "amplitude": ({"": 1.0}, ""),
}
_NAME_RE = re.compile(r"^[A-Za-z0-9_.+\-=]+$")
_NUMBER_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(.*)$")


class SequenceError(ValueError):
    pass


class SequenceSyntaxError(SequenceError):
    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SequenceSemanticError(SequenceError):
    def __init__(self, violations, lines):
        self.violations = violations
        self.lines = lines
        parts = []
        for v, ls in zip(violations, lines):
            where = ", ".join(str(n) for n in ls) if ls else "?"
            parts.append(f"line(s) {where}: {v}")
        super().__init__("; ".join(parts))


class TimelineAlignmentError(SequenceError):
    pass


@dataclass(frozen=True, order=True)
class PulseEvent:
    t_start: int  # ns
    channel: str
    duration: int  # ns
    attributes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "t_start", int(self.t_start))
        object.__setattr__(self, "duration", int(self.duration))
        attrs = self.attributes.items() if isinstance(self.attributes, dict) else self.attributes
        object.__setattr__(self, "attributes", tuple(sorted((k, float(v)) for k, v in attrs)))

    @property
    def end(self) -> int:
        return self.t_start + self.duration

    def attr(self, key, default=None):
        return dict(self.attributes).get(key, default)

    @property
    def start_s(self) -> float:
        return self.t_start * 1e-9

    @property
    def duration_s(self) -> float:
        return self.duration * 1e-9


@dataclass(frozen=True)
class Segment:
    label: str
    duration: int  # ns, one repetition
    events: tuple = ()
    repeat: int = 1

    def __post_init__(self):
        object.__setattr__(self, "duration", int(self.duration))
        object.__setattr__(self, "repeat", int(self.repeat))
        object.__setattr__(self, "events", tuple(sorted(self.events)))

    def channel_events(self, channel):
        return [e for e in self.events if e.channel == channel]

    def on_time(self, channel) -> int:
        """Programmed on-time of ``channel`` in one repetition, ns."""
        return sum(e.duration for e in self.events if e.channel == channel)

    @property
    def total_duration(self) -> int:
        return self.duration * self.repeat


@dataclass(frozen=True)
class Sequence:
    segments: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    def segment(self, label) -> Segment:
        for s in self.segments:
            if s.label == label:
                return s
        raise KeyError(label)


@dataclass(frozen=True)
class Violation:
    segment: str
    channel: str
    t_start: int
    t_end: int
    message: str
    events: tuple = field(default=(), compare=False)

    def __str__(self):
        return f"segment {self.segment} {self.channel} [{self.t_start}ns, {self.t_end}ns): {self.message}"


def validate_sequence(seq: Sequence) -> list:
    """All invariant violations of ``seq``; empty when it is valid."""
    out = []
    if len(seq.segments) not in ALLOWED_SEGMENT_COUNTS:
        out.append(Violation("*", "*", 0, 0,
                             f"segment count {len(seq.segments)} not in {ALLOWED_SEGMENT_COUNTS}"))
    seen = set()
    for seg in seq.segments:
        if seg.label in seen:
            out.append(Violation(seg.label, "*", 0, seg.duration, "duplicate segment label"))
        seen.add(seg.label)
        if seg.duration <= 0:
            out.append(Violation(seg.label, "*", 0, seg.duration, "segment duration must be > 0"))
        if seg.repeat < 1:
            out.append(Violation(seg.label, "*", 0, seg.duration, "repeat must be >= 1"))
        for ev in seg.events:
            span = (seg.label, ev.channel, ev.t_start, ev.end)
            if ev.channel not in CHANNELS:
                out.append(Violation(*span, f"unknown channel {ev.channel!r}", (ev,)))
                continue
            if ev.t_start < 0:
                out.append(Violation(*span, "event starts before the segment", (ev,)))
            if ev.duration <= 0:
                out.append(Violation(*span, "event duration must be > 0", (ev,)))
            if ev.end > seg.duration:
                out.append(Violation(*span, f"event ends after the segment ({seg.duration}ns)", (ev,)))
            keys = {k for k, _ in ev.attributes}
            bad = keys - ALLOWED_KEYS[ev.channel]
            if bad:
                out.append(Violation(*span, f"invalid attribute(s) {sorted(bad)} for {ev.channel}", (ev,)))
            missing = REQUIRED_KEYS[ev.channel] - keys
            if missing:
                out.append(Violation(*span, f"missing attribute(s) {sorted(missing)}", (ev,)))
            if ev.channel == "laser" and ev.attr("power", 0.0) < 0:
                out.append(Violation(*span, "laser power must be >= 0", (ev,)))
        for ch in CHANNELS:
            evs = sorted(seg.channel_events(ch))
            for prev, nxt in zip(evs, evs[1:]):
                if nxt.t_start < prev.end:
                    out.append(Violation(seg.label, ch, nxt.t_start, min(prev.end, nxt.end),
                                         "overlapping events on the same channel", (prev, nxt)))
    return out


# -- parsing ---------------------------------------------------------------

def parse_time(text) -> int:
    """``"5us"`` -> 5000 (ns). Raises ``ValueError`` on bad units or sub-ns values."""
    m = _NUMBER_RE.match(text)
    if not m or m.group(2) not in _TIME_UNITS:
        raise ValueError(f"bad time {text!r} (expected a number with ns/us/ms/s)")
    ns = Fraction(m.group(1)) * _TIME_UNITS[m.group(2)]
    if ns.denominator != 1:
        raise ValueError(f"time {text!r} is not a whole number of nanoseconds")
    return int(ns)


def _parse_attr(key, text):
    units, _ = _ATTR_UNITS[key]
    m = _NUMBER_RE.match(text)
    if not m or m.group(2) not in units:
        allowed = "/".join(u for u in units if u) or "no unit"
        raise ValueError(f"bad value {text!r} for {key} (units: {allowed})")
    return float(m.group(1)) * units[m.group(2)]


def _tokens(line):
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def parse_sequence(text: str) -> Sequence:
    name = ""
    segments = []  # [label, duration, repeat, [(event, lineno)]]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        head, col = toks[0]

        def fail(msg, column):
            raise SequenceSyntaxError(msg, lineno, column)

        if head == "sequence":
            if segments:
                fail("'sequence' must precede the first segment", col)
            if len(toks) != 2 or not _NAME_RE.match(toks[1][0]):
                fail("expected 'sequence <name>'", col)
            name = toks[1][0]
        elif head == "segment":
            if len(toks) not in (3, 5):
                fail("expected 'segment <label> <duration> [repeat <n>]'", col)
            label, lcol = toks[1]
            if not _NAME_RE.match(label):
                fail(f"invalid segment label {label!r}", lcol)
            try:
                duration = parse_time(toks[2][0])
            except ValueError as exc:
                fail(str(exc), toks[2][1])
            repeat = 1
            if len(toks) == 5:
                if toks[3][0] != "repeat":
                    fail(f"expected 'repeat', got {toks[3][0]!r}", toks[3][1])
                if not re.fullmatch(r"\d+", toks[4][0]):
                    fail(f"repeat count must be a positive integer, got {toks[4][0]!r}", toks[4][1])
                repeat = int(toks[4][0])
            segments.append([label, duration, repeat, []])
        else:
            if head not in CHANNELS:
                fail(f"unknown channel or keyword {head!r}", col)
            if not segments:
                fail("event outside of a segment", col)
            if len(toks) < 3:
                fail(f"expected '{head} @<time> <duration> [key=value ...]'", col)
            start_tok, scol = toks[1]
            if not start_tok.startswith("@"):
                fail("event start must be written as @<time>", scol)
            try:
                start = parse_time(start_tok[1:])
            except ValueError as exc:
                fail(str(exc), scol + 1)
            try:
                duration = parse_time(toks[2][0])
            except ValueError as exc:
                fail(str(exc), toks[2][1])
            attrs = {}
            for tok, tcol in toks[3:]:
                key, eq, value = tok.partition("=")
                if not eq or not key or not value:
                    fail(f"expected key=value, got {tok!r}", tcol)
                if key not in ALLOWED_KEYS[head]:
                    fail(f"unknown attribute {key!r} for channel {head}", tcol)
                if key in attrs:
                    fail(f"duplicate attribute {key!r}", tcol)
                try:
                    attrs[key] = _parse_attr(key, value)
                except ValueError as exc:
                    fail(str(exc), tcol + len(key) + 1)
            segments[-1][3].append((PulseEvent(start, head, duration, attrs), lineno))

    if not segments:
        raise SequenceSyntaxError("no segments defined", max(1, len(text.splitlines())), 1)
    line_of = {}
    built = []
    for label, duration, repeat, evs in segments:
        for ev, ln in evs:
            line_of.setdefault((label, ev), []).append(ln)
        built.append(Segment(label, duration, tuple(e for e, _ in evs), repeat))
    seq = Sequence(tuple(built), name)
    violations = validate_sequence(seq)
    if violations:
        lines = []
        for v in violations:
            ls = []
            for ev in v.events:
                ls.extend(line_of.get((v.segment, ev), []))
            lines.append(sorted(set(ls)))
        raise SequenceSemanticError(violations, lines)
    return seq


def _format_value(key, value):
    return f"{key}={value!r}{_ATTR_UNITS[key][1]}"


def format_sequence(seq: Sequence) -> str:
    lines = []
    if seq.name:
        lines.append(f"sequence {seq.name}")
    for seg in seq.segments:
        head = f"segment {seg.label} {seg.duration}ns"
        if seg.repeat != 1:
            head += f" repeat {seg.repeat}"
        lines.append(head)
        for ev in seg.events:
            attrs = "".join(" " + _format_value(k, v) for k, v in ev.attributes)
            lines.append(f"  {ev.channel} @{ev.t_start}ns {ev.duration}ns{attrs}")
    return "\n".join(lines) + "\n"


# -- generators --------------------------------------------------------------

def _ns(seconds) -> int:
    return int(round(seconds * 1e9))


def gen_odmr(f_points, cw: bool = True, laser_power: float = 8.0,
             segment_time: float = 0.2, laser_pulse: float = 5e-6, gap: float = 1e-6,
             rabi_rate: float = 12.5e6):
    """Differential ODMR sequences, one per microwave frequency.

    With ``cw`` both segments hold a continuous laser and segment A a
    continuous microwave. Otherwise segment A interleaves laser readout pulses
    with microwave pi pulses and segment B omits them.
    """
    seg_ns = _ns(segment_time)
    out = []
    for f in f_points:
        if not f > 0:
            raise ValueError("microwave frequency must be > 0")
        mw_attrs = {"amplitude": 1.0, "frequency": float(f)}
        if cw:
            laser = PulseEvent(0, "laser", seg_ns, {"power": laser_power})
            a = Segment("A", seg_ns, (laser, PulseEvent(0, "mw", seg_ns, mw_attrs)))
            b = Segment("B", seg_ns, (laser,))
        else:
            t_pi = _ns(1.0 / (2.0 * rabi_rate))
            lp, g = _ns(laser_pulse), _ns(gap)
            period = lp + g + t_pi + g
            laser = PulseEvent(0, "laser", lp, {"power": laser_power})
            a = Segment("A", period, (laser, PulseEvent(lp + g, "mw", t_pi, mw_attrs)), seg_ns // period)
            b = Segment("B", period, (laser,), seg_ns // period)
        out.append((float(f), Sequence((a, b), f"odmr_{float(f)!r}")))
    return out


def plsd_period_ns(f_probe: float) -> int:
    """Probe period rounded to a multiple of 4 ns so quadrature offsets are exact."""
    return max(4, 4 * int(round(1e9 / f_probe / 4.0)))


def _wrapped_pulse(offset, width, period, power):
    end = offset + width
    if end <= period:
        return (PulseEvent(offset, "laser", width, {"power": power}),)
    return (PulseEvent(offset, "laser", period - offset, {"power": power}),
            PulseEvent(0, "laser", end - period, {"power": power}))


def gen_plsd(f_probe: float, duty: float, laser_power: float = 8.0, quadrature: bool = False,
             pulse_width: float | None = None, segment_time: float = 0.2) -> Sequence:
    """Stroboscopic laser readout phase-locked to an AC field at ``f_probe``.

    Each segment is one probe period repeated to fill ``segment_time``. Later
    segments delay the pulse by half a period (or by quarter periods with
    ``quadrature``); pulses crossing the period boundary wrap around.
    ``pulse_width`` overrides ``duty / f_probe`` so a sweep can hold the
    width fixed while the spacing varies.
    """
    if not 0 < duty < 1:
        raise ValueError("duty must lie in (0, 1)")
    if not f_probe > 0:
        raise ValueError("f_probe must be > 0")
    period = plsd_period_ns(f_probe)
    n_pulses = _ns(segment_time) // period
    if n_pulses < 1:
        raise ValueError(f"f_probe={f_probe} Hz is too low for one pulse per {segment_time} s segment")
    width = _ns(pulse_width) if pulse_width is not None else int(round(duty * period))
    if not 0 < width < period:
        raise ValueError(f"pulse width {width}ns does not fit the {period}ns period")
    n_seg = 4 if quadrature else 2
    labels = "ABCD"
    segments = []
    for k in range(n_seg):
        offset = k * period // n_seg
        events = _wrapped_pulse(offset, width, period, laser_power)
        segments.append(Segment(labels[k], period, events, n_pulses))
    return Sequence(tuple(segments), f"plsd_{period}ns")


def gen_rabi(tau_points, laser_pulse: float = 5e-6, mw_amplitude: float = 1.0,
             gap: float = 1e-6, laser_power: float = 8.0, segment_time: float = 0.2,
             phase: float = 0.0, detuning: float = 0.0):
    """One differential sequence per microwave pulse width in ``tau_points`` (s)."""
    lp, g, seg_ns = _ns(laser_pulse), _ns(gap), _ns(segment_time)
    out = []
    for tau in tau_points:
        t = _ns(tau)
        if t < 0:
            raise ValueError("pulse widths must be >= 0")
        period = lp + g + t + g
        laser = PulseEvent(0, "laser", lp, {"power": laser_power})
        a_events = [laser]
        if t > 0:
            a_events.append(PulseEvent(lp + g, "mw", t, {
                "amplitude": mw_amplitude, "phase": phase, "detuning": detuning}))
        repeat = seg_ns // period
        out.append(Sequence((Segment("A", period, tuple(a_events), repeat),
                             Segment("B", period, (laser,), repeat)), f"rabi_{t}ns"))
    return out


def cpmg_pulse_times(rabi_rate: float):
    """``(t_pi/2, t_pi)`` in ns for a given Rabi rate (Hz)."""
    return _ns(1.0 / (4.0 * rabi_rate)), _ns(1.0 / (2.0 * rabi_rate))


def gen_cpmg(tau_points, rabi_rate: float = 12.5e6, laser_pulse: float = 5e-6,
             gap: float = 1e-6, mw_amplitude: float = 1.0, laser_power: float = 8.0,
             segment_time: float = 0.2):
    """Echo sequences x(pi/2) - tau/2 - y(pi) - tau/2 - x(pi/2) between laser pulses.

    ``tau_points`` are total free-precession times in seconds; each half is
    rounded to whole nanoseconds.
    """
    lp, g, seg_ns = _ns(laser_pulse), _ns(gap), _ns(segment_time)
    t90, t180 = cpmg_pulse_times(rabi_rate)
    out = []
    for tau in tau_points:
        half = _ns(tau / 2.0)
        if half < 0:
            raise ValueError("free-precession times must be >= 0")
        t = lp + g
        mw = []
        for dur, ph, wait in ((t90, 0.0, half), (t180, math.pi / 2, half), (t90, 0.0, 0)):
            mw.append(PulseEvent(t, "mw", dur, {"amplitude": mw_amplitude, "phase": ph}))
            t += dur + wait
        init = PulseEvent(0, "laser", lp, {"power": laser_power})
        readout = PulseEvent(t, "laser", lp, {"power": laser_power})
        period = t + lp + g
        repeat = seg_ns // period
        out.append(Sequence((Segment("A", period, (init, *mw, readout), repeat),
                             Segment("B", period, (init, readout), repeat)), f"cpmg_{2 * half}ns"))
    return out


# -- rendering ---------------------------------------------------------------

@dataclass(frozen=True)
class SegmentWaveform:
    label: str
    dt: float
    channels: dict

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))


def render_timeline(seq: Sequence, dt: float) -> list:
    """Sample one repetition of each segment on a grid of step ``dt`` (s).

    Laser samples carry the power (mW), microwave samples the amplitude,
    sync samples 1.0 while asserted. Every event boundary must fall on the
    grid to better than 1 ns.
    """
    dt_ns = dt * 1e9
    if not dt_ns > 0:
        raise ValueError("dt must be > 0")

    def index(t_ns, what):
        k = int(round(t_ns / dt_ns))
        if abs(k * dt_ns - t_ns) >= 1.0:
            raise TimelineAlignmentError(f"{what} at {t_ns}ns is not on the {dt_ns:g}ns grid")
        return k

    out = []
    for seg in seq.segments:
        n = index(seg.duration, f"segment {seg.label} end")
        chans = {ch: np.zeros(n) for ch in CHANNELS}
        for ev in seg.events:
            what = f"segment {seg.label} {ev.channel} event @{ev.t_start}ns"
            i0, i1 = index(ev.t_start, what), index(ev.end, what)
            if ev.channel == "laser":
                level = ev.attr("power", 0.0)
            elif ev.channel == "mw":
                level = ev.attr("amplitude", 1.0)
            else:
                level = 1.0
            chans[ev.channel][i0:i1] = level
        out.append(SegmentWaveform(seg.label, dt, chans))
    return out
