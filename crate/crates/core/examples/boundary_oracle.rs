//! Boundary model: bootstrap edf against the closed-form cdf, and the
//! decomposition of the diagnostic.

use bootdiag::diagnostics::boundary_decomposition;
use bootdiag::models::{boundary_closed_form_d, simulate, BoundaryRegime, Fit, ScenarioSpec};
use bootdiag::probkernel::SeedSpec;

fn main() {
    for c in [0.0, 0.5, 1.0, 3.0] {
        let spec = ScenarioSpec::boundary(400, BoundaryRegime::NearBoundary(c));
        let fitted = simulate(&spec, &SeedSpec::new(5)).unwrap();
        let Fit::Boundary(fit) = fitted.fit() else { unreachable!() };
        let d = boundary_closed_form_d(&fitted).unwrap().value;
        let parts = boundary_decomposition(&fitted, SeedSpec::new(6), 50).unwrap();
        println!(
            "c = {c}: theta_hat = {:.4}  ||G_n - Phi|| = {d:.4}  T* = {:.3} = Z* {:.3} + a* {:+.3}  (|a*| <= {:.3})",
            fit.theta_hat, parts.t_star, parts.z_star, parts.a_star, parts.bound
        );
    }
}
