"""Cooling coefficients and the steady-state phonon number versus detuning.

Blue detuning from the excited state makes absorption of the cooling
(Stokes) photon resonant with the narrow dark-state feature. The scan
shows the phonon number dropping as the detuning grows, and the heating
regime at negative detuning.
"""

import numpy as np

from lambdaspec import HeatingRegimeError, ModelParams, build_expansion, phonon_coefficients


def main() -> None:
    base = ModelParams(omega1=10.0, omega2=10.0, delta=1.0, gamma1=2.5, gamma2=2.5,
                       eta1=1e-4, eta2=1e-4, n_max=1)
    print(f"{'delta':>7} {'A_-/eta^2':>11} {'A_+/eta^2':>11} {'<n>':>10} {'nu_bar/eta^2':>13}")
    for delta in np.concatenate([[-10.0], np.geomspace(0.5, 40.0, 9)]):
        p = base.with_(delta=float(delta))
        eta2 = p.eta**2
        try:
            c = phonon_coefficients(build_expansion(p))
        except HeatingRegimeError as err:
            print(f"{delta:7.2f}   heating: A_+ = {err.A_plus:.3g} > A_- = {err.A_minus:.3g}")
            continue
        print(f"{delta:7.2f} {c.A_minus / eta2:11.4g} {c.A_plus / eta2:11.4g} "
              f"{c.n_bar:10.4g} {c.nu_bar / eta2:13.4g}")


if __name__ == "__main__":
    main()
