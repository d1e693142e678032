import math
from dataclasses import replace

import numpy as np
import pytest

from heraldsim.cqed import (TWO_PI, CavityParams, CqedSystem, DomainError,
                            EmitterParams, SPIN_BASIS)
from heraldsim.interferometer import (
    FilterCavity,
    SidebandConfig,
    filter_transmission,
    phase_from_mw_frequency,
    phase_scan,
    sideband_frequencies,
    spin_transmission_map,
    transmission_amplitude,
)

GHZ = TWO_PI * 1e9


def sideband_cfg(**kw):
    base = dict(omega_carrier=TWO_PI * 406.6947e12, omega_mw=3.7 * GHZ,
                c_carrier=0.08, c_sideband=0.38, phi_c=0.0, delta_L=63.78)
    base.update(kw)
    return SidebandConfig(**base)


def table_system():
    cav = CavityParams(TWO_PI * 406.706e12, 9.0 * GHZ, 5.4 * GHZ)
    ea = EmitterParams(cav.omega_c - 14.55 * GHZ, cav.omega_c - 13.60 * GHZ,
                       4.1 * GHZ, 0.080 * GHZ, 0.058 * GHZ)
    eb = EmitterParams(cav.omega_c - 8.48 * GHZ, cav.omega_c - 7.25 * GHZ,
                       2.9 * GHZ, 0.097 * GHZ, 0.113 * GHZ)
    return CqedSystem(cav, ea, eb)


def test_sideband_frequencies_hit_published_comb():
    sba, sbb, car = sideband_frequencies(sideband_cfg())
    assert sba == pytest.approx(TWO_PI * 406.6910e12, rel=1e-12)
    assert sbb == pytest.approx(TWO_PI * 406.6984e12, rel=1e-12)
    assert car == pytest.approx(0.5 * (sba + sbb), rel=1e-15)


def test_sideband_frequencies_requires_drive():
    with pytest.raises(DomainError):
        sideband_frequencies(sideband_cfg(omega_mw=0.0))


def test_phase_advances_by_2pi_per_free_spectral_range():
    delta_L = 63.78
    fsr_ordinary = 299_792_458.0 / delta_L  # ~4.7 MHz
    omega = 3.7 * GHZ
    p0 = phase_from_mw_frequency(omega, delta_L)
    p1 = phase_from_mw_frequency(omega + TWO_PI * fsr_ordinary, delta_L)
    assert p1 == pytest.approx(p0, abs=1e-6)
    assert phase_from_mw_frequency(0.0, delta_L) == 0.0
    with pytest.raises(DomainError):
        phase_from_mw_frequency(omega, 0.0)


def test_phase_modular_reduction():
    delta_L = 299_792_458.0 / 4.7e6
    phi = phase_from_mw_frequency(3.7 * GHZ, delta_L)
    expect = TWO_PI * ((3.7e9 / 4.7e6) % 1.0)
    assert phi == pytest.approx(expect, rel=1e-9)


def test_dark_port_destructive_interference_exact():
    # equal unit reflections on both sidebands, no carrier: T(pi) = 0
    cfg = sideband_cfg(c_carrier=0.0)
    cav = CavityParams(TWO_PI * 406.706e12, 9.0 * GHZ, 0.0)
    bare = CqedSystem(cav,
                      EmitterParams(1.0, 2.0, 1e-30 + 1e-31, 1.0),
                      EmitterParams(1.0, 2.0, 1e-30 + 1e-31, 1.0))
    # emitters negligible and probe far from cavity: R = 1 at both sidebands
    far = replace(cfg, omega_carrier=cav.omega_c + 1e6 * GHZ)
    t = transmission_amplitude(SPIN_BASIS[0], far, bare, dphi=math.pi)
    assert abs(t) < 1e-5


def test_odd_parity_transmits_single_sideband():
    # R(sbA) = 1, R(sbB) = 0 at dphi = pi gives |T| = c_sideband
    cfg = sideband_cfg(c_carrier=0.0)
    t = (cfg.c_sideband * 1.0 * np.exp(-0.5j * math.pi)
         + cfg.c_sideband * 0.0 * np.exp(0.5j * math.pi))
    assert abs(t) == pytest.approx(cfg.c_sideband, rel=1e-15)


def test_transmission_periodicity():
    # carrier-free curves repeat every 2 pi; with carrier leakage the full
    # physical period is 4 pi (half-angle sideband phases)
    system = table_system()
    cfg0 = sideband_cfg(c_carrier=0.0)
    cfg = sideband_cfg()
    for spin in SPIN_BASIS:
        a = transmission_amplitude(spin, cfg0, system, dphi=1.234)
        b = transmission_amplitude(spin, cfg0, system, dphi=1.234 + TWO_PI)
        assert abs(a) == pytest.approx(abs(b), rel=1e-12)
        t1 = transmission_amplitude(spin, cfg, system, dphi=1.234)
        t2 = transmission_amplitude(spin, cfg, system, dphi=1.234 + 2 * TWO_PI)
        assert t1 == pytest.approx(t2, rel=1e-12)


def test_carrier_free_relabeling_symmetry():
    # with no carrier, exchanging the two sideband reflections while flipping
    # the sign of dphi leaves |T| unchanged (relabeling symmetry)
    cfg = sideband_cfg(c_carrier=0.0)
    system = table_system()
    sba, sbb, _ = sideband_frequencies(cfg)
    from heraldsim.cqed import reflection_amplitude

    for dphi in (0.3, 1.7, 4.4):
        for spin in SPIN_BASIS:
            ra = reflection_amplitude(sba, system.cavity, system.emitters_for(spin))
            rb = reflection_amplitude(sbb, system.cavity, system.emitters_for(spin))
            t = transmission_amplitude(spin, cfg, system, dphi=dphi)
            assert abs(t) == pytest.approx(
                abs(cfg.c_sideband * (ra * np.exp(-0.5j * dphi)
                                      + rb * np.exp(0.5j * dphi))), rel=1e-12)
            swapped = abs(cfg.c_sideband * (rb * np.exp(-0.5j * -dphi)
                                            + ra * np.exp(0.5j * -dphi)))
            assert abs(t) == pytest.approx(swapped, rel=1e-12)


def test_phase_scan_minimum_and_period():
    cfg = sideband_cfg(c_carrier=0.0)
    system = table_system()
    grid = np.linspace(0, TWO_PI, 361)
    scan = phase_scan(SPIN_BASIS, grid, cfg, system, sigma_average=False)
    uu = scan.mean_t2[SPIN_BASIS[0]]
    assert uu[0] == pytest.approx(uu[-1], rel=1e-10)  # 2 pi period
    assert scan.var_t2[SPIN_BASIS[0]].max() == 0.0


def test_phase_scan_requires_valid_grid():
    cfg = sideband_cfg()
    with pytest.raises(DomainError):
        phase_scan(SPIN_BASIS, [], cfg, table_system())
    with pytest.raises(DomainError):
        phase_scan(SPIN_BASIS, [math.nan], cfg, table_system())


def test_spin_transmission_map_covers_basis():
    tm = spin_transmission_map(sideband_cfg(), table_system())
    assert set(tm) == set(SPIN_BASIS)


def filter_cavity():
    return FilterCavity(omega_0=TWO_PI * 406.6947e12, fwhm=TWO_PI * 238e6,
                        fsr=TWO_PI * 75.11e9, peak_transmission=0.09)


def test_filter_peak_and_half_width():
    f = filter_cavity()
    assert filter_transmission(f.omega_0, f) == pytest.approx(0.09, rel=1e-12)
    assert filter_transmission(f.omega_0 + f.fwhm / 2, f) == pytest.approx(0.045,
                                                                           rel=1e-8)


def test_filter_sideband_rejection():
    f = filter_cavity()
    t = filter_transmission(f.omega_0 + TWO_PI * 7.4e9, f)
    expect = 0.09 / (1.0 + (2 * 7.4e9 / 238e6) ** 2)
    assert t == pytest.approx(expect, rel=1e-12)
    assert 0.09 / t == pytest.approx(3868, rel=1e-3)


def test_filter_comb_periodicity():
    f = filter_cavity()
    w = f.omega_0 + 0.37 * f.fwhm
    for k in (-3, 1, 7):
        assert filter_transmission(w + k * f.fsr, f) == pytest.approx(
            filter_transmission(w, f), rel=1e-9)


def test_filter_invariants():
    with pytest.raises(DomainError):
        FilterCavity(0.0, TWO_PI * 80e9, TWO_PI * 75e9, 0.09)
    with pytest.raises(DomainError):
        FilterCavity(0.0, TWO_PI * 238e6, TWO_PI * 75e9, 1.5)
