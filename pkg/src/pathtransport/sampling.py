"""Seeded factories for random smooth test data.

Paths, loops, maps, sections, and frames are generated as trigonometric
polynomials rendered to expression source strings, so every object is
expression-backed: velocities and derivatives are symbolic, the data is
smooth by construction, and a fixed seed reproduces it bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import FrameField, Path, SectionAlongPath, TwoParamMap


def generator(seed) -> np.random.Generator:
    return np.random.default_rng(None if seed is None else int(seed))


def _fmt(value) -> str:
    return repr(float(value))


def _trig_terms(gen, harmonics, budget, omega, var) -> str:
    """Sum of sin/cos terms whose coefficient magnitudes total <= budget."""
    raw = gen.normal(size=2 * harmonics)
    total = float(np.sum(np.abs(raw)))
    if total == 0.0 or budget <= 0.0:
        return "0"
    coefs = raw * (budget * float(gen.uniform(0.4, 0.9)) / total)
    parts = []
    for k in range(harmonics):
        w = _fmt((k + 1) * omega)
        parts.append(f"{_fmt(coefs[2 * k])}*sin({w}*{var})")
        parts.append(f"{_fmt(coefs[2 * k + 1])}*cos({w}*{var})")
    return "+".join(parts)


def random_smooth_path(gen, region, domain=(0.0, 1.0), harmonics=3) -> Path:
    """A path staying inside the per-axis region box, with room to spare."""
    a, b = float(domain[0]), float(domain[1])
    omega = math.pi / (b - a)
    sources = []
    for lo, hi in region:
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        offset = center + float(gen.uniform(-0.25, 0.25)) * half
        sources.append(
            f"{_fmt(offset)}+{_trig_terms(gen, harmonics, 0.6 * half, omega, 's')}"
        )
    return Path.from_expressions((a, b), sources)


def random_loop(gen, region, harmonics=2) -> Path:
    """A closed path on [0, 2*pi]: integer harmonics close it exactly."""
    sources = []
    for lo, hi in region:
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        offset = center + float(gen.uniform(-0.2, 0.2)) * half
        sources.append(
            f"{_fmt(offset)}+{_trig_terms(gen, harmonics, 0.6 * half, 1.0, 's')}"
        )
    return Path.from_expressions((0.0, 2.0 * math.pi), sources)


def random_two_param_map(gen, region, domain=((0.0, 1.0), (0.0, 1.0)),
                         harmonics=2) -> TwoParamMap:
    """A C-infinity map of the parameter rectangle into the region box."""
    (a, b), (c, d) = domain
    ws = math.pi / (float(b) - float(a))
    wt = math.pi / (float(d) - float(c))
    sources = []
    for lo, hi in region:
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        offset = center + float(gen.uniform(-0.2, 0.2)) * half
        s_part = _trig_terms(gen, harmonics, 0.25 * half, ws, "s")
        t_part = _trig_terms(gen, harmonics, 0.25 * half, wt, "t")
        cross = (
            f"{_fmt(float(gen.uniform(-0.1, 0.1)) * half)}"
            f"*sin({_fmt(ws)}*s)*cos({_fmt(wt)}*t)"
        )
        sources.append(f"{_fmt(offset)}+{s_part}+{t_part}+{cross}")
    return TwoParamMap.from_expressions(domain, sources)


def random_section(gen, fiber_dim, harmonics=2, scale=1.0,
                   omega=math.pi) -> SectionAlongPath:
    sources = []
    for _ in range(int(fiber_dim)):
        offset = float(gen.uniform(-1.0, 1.0)) * scale
        sources.append(
            f"{_fmt(offset)}+{_trig_terms(gen, harmonics, scale, omega, 's')}"
        )
    return SectionAlongPath.from_expressions(sources)


def _perturbed_identity_entries(gen, m, harmonics, strength, omega, var_for):
    """m x m expression entries for I plus a small smooth perturbation;
    Gershgorin keeps the determinant within fixed bounds."""
    budget = strength / m
    entries = []
    for i in range(m):
        row = []
        for j in range(m):
            per = _trig_terms(gen, harmonics, budget, omega, var_for(i, j))
            row.append(f"1+{per}" if i == j else per)
        entries.append(row)
    return entries


def random_frame_along_path(gen, fiber_dim, harmonics=2,
                            strength=0.4) -> FrameField:
    """A smooth invertible frame s -> A(s), close enough to the identity
    that |det A| stays in roughly [1 - strength, 1 + strength]^m."""
    entries = _perturbed_identity_entries(
        gen, int(fiber_dim), harmonics, strength, 1.0, lambda i, j: "s"
    )
    return FrameField.from_path_expressions(entries)


def random_frame_on_chart(gen, fiber_dim, base_dim, harmonics=1,
                          strength=0.4, omega=1.0) -> FrameField:
    """A smooth invertible frame x -> A(x); each entry wiggles along one
    randomly chosen coordinate."""
    n = int(base_dim)

    def var_for(i, j):
        return f"x{int(gen.integers(1, n + 1))}"

    entries = _perturbed_identity_entries(
        gen, int(fiber_dim), harmonics, strength, omega, var_for
    )
    return FrameField.from_chart_expressions(entries, n)


def random_parameters(gen, interval, count) -> np.ndarray:
    a, b = float(interval[0]), float(interval[1])
    return gen.uniform(a, b, size=int(count))
