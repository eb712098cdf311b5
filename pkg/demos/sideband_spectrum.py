"""The emission spectrum split into motional sidebands and the Mollow part.

For a small Lamb-Dicke parameter the two sidebands at -(1 + nu_bar) and
+(1 + nu_bar) are Lorentzians of equal height; the broad Mollow-type
features grow with the coupling and become comparable at eta = 0.05.
"""

import numpy as np

from lambdaspec import ModelParams, build_expansion, compute_spectrum, phonon_coefficients
from lambdaspec.spectrum import sideband_closed_form


def describe(p: ModelParams) -> None:
    c = phonon_coefficients(build_expansion(p))
    sb = sideband_closed_form(p, c)
    omega = np.linspace(-50.0, 50.0, 4001)
    res = compute_spectrum(p, omega)
    stokes = np.array([-sb.center])
    at_peak = compute_spectrum(p, stokes).S_SB[0]
    print(f"eta = {p.eta1:g}: <n> = {c.n_bar:.4g}, gamma_S = {c.gamma_S:.4g}, "
          f"nu_bar = {c.nu_bar:.3g}")
    print(f"  sideband peak {sb.peak:.4g} (sampled {at_peak:.4g}), half-width {sb.halfwidth:.4g}")
    print(f"  largest Mollow value {res.S_M.max():.4g} at omega = {omega[res.S_M.argmax()]:.3f}")
    print(f"  elastic weight {res.elastic_weight:.3g}")


def main() -> None:
    common = dict(omega1=8.5, omega2=8.5, delta=35.0, gamma1=5.0, gamma2=5.0, n_max=8)
    for eta in (0.01, 0.05):
        describe(ModelParams(**common, eta1=eta, eta2=eta))


if __name__ == "__main__":
    main()
