//! Rectangular waveguide with a dispersive dielectric inlay, TE10 mode.
//!
//! The guide of total length `L` consists of three sections: vacuum of
//! length `offset`, the inlay of length `inlay_length`, and vacuum for the
//! remainder. Each section is a transmission line with propagation constant
//! `beta = sqrt(omega² eps mu - (pi/a)²)` and wave impedance
//! `Z = omega mu / beta`; the sections are cascaded as ABCD matrices and
//! `S11` is taken with both ports referenced to the vacuum wave impedance at
//! the guide ends. Time convention `exp(j omega t)`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CostUnit, FrequencyGrid, Oracle, OracleError, SParamSample};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const MU_0: f64 = 4.0e-7 * PI;
pub const EPS_0: f64 = 1.0 / (MU_0 * SPEED_OF_LIGHT * SPEED_OF_LIGHT);

/// Number of uncertain parameters: inlay length, offset, two material parameters.
pub const PARAMETER_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideGeometry {
    /// Broad-wall width `a` in mm.
    pub width_mm: f64,
    /// Total guide length `L` in mm.
    pub length_mm: f64,
}

impl Default for WaveguideGeometry {
    fn default() -> Self {
        Self {
            width_mm: 30.0,
            length_mm: 30.0,
        }
    }
}

impl WaveguideGeometry {
    /// Angular cutoff frequency of the TE10 mode in vacuum.
    pub fn cutoff(&self) -> f64 {
        PI * SPEED_OF_LIGHT / (self.width_mm * 1e-3)
    }
}

/// One realization of the waveguide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideConfig {
    pub geometry: WaveguideGeometry,
    pub inlay_length_mm: f64,
    pub offset_mm: f64,
    pub eps_param: f64,
    pub mu_param: f64,
}

impl WaveguideConfig {
    pub fn from_params(geometry: WaveguideGeometry, p: &[f64]) -> Result<Self, OracleError> {
        if p.len() != PARAMETER_COUNT {
            return Err(OracleError::Dimension {
                expected: PARAMETER_COUNT,
                got: p.len(),
            });
        }
        Ok(Self {
            geometry,
            inlay_length_mm: p[0],
            offset_mm: p[1],
            eps_param: p[2],
            mu_param: p[3],
        })
    }

    fn check(&self) -> Result<(), OracleError> {
        let g = &self.geometry;
        let finite = [
            g.width_mm,
            g.length_mm,
            self.inlay_length_mm,
            self.offset_mm,
            self.eps_param,
            self.mu_param,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(OracleError::Geometry("non-finite value".into()));
        }
        if g.width_mm <= 0.0 || g.length_mm <= 0.0 {
            return Err(OracleError::Geometry(format!(
                "width {} mm and length {} mm must be positive",
                g.width_mm, g.length_mm
            )));
        }
        if self.inlay_length_mm < 0.0 || self.offset_mm < 0.0 {
            return Err(OracleError::Geometry(format!(
                "inlay length {} mm and offset {} mm must be nonnegative",
                self.inlay_length_mm, self.offset_mm
            )));
        }
        if self.inlay_length_mm + self.offset_mm > g.length_mm {
            return Err(OracleError::Geometry(format!(
                "inlay ({} mm) plus offset ({} mm) exceeds guide length {} mm",
                self.inlay_length_mm, self.offset_mm, g.length_mm
            )));
        }
        Ok(())
    }

    /// Relative permittivity of the inlay.
    pub fn eps_r(&self, omega: f64) -> Complex64 {
        let p = self.eps_param;
        let relax = Complex64::new(1.0, omega / (2.0 * PI * 5e9));
        Complex64::from(1.0 + p) + (1.0 - p) / relax
    }

    /// Relative permeability of the inlay.
    pub fn mu_r(&self, omega: f64) -> Complex64 {
        let p = self.mu_param;
        let relax = Complex64::new(1.0, omega / (1.1 * 2.0 * PI * 20e9));
        Complex64::from(1.0 + p) + (2.0 - p) / relax
    }
}

type Abcd = [[Complex64; 2]; 2];

fn mul(a: &Abcd, b: &Abcd) -> Abcd {
    let mut out = [[Complex64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn line_section(z: Complex64, beta: Complex64, length: f64) -> Abcd {
    let theta = beta * length;
    let j = Complex64::i();
    let (c, s) = (theta.cos(), theta.sin());
    [[c, j * z * s], [j * s / z, c]]
}

/// Propagation constant and wave impedance of the TE10 mode.
fn te10(omega: f64, width_m: f64, eps_r: Complex64, mu_r: Complex64) -> (Complex64, Complex64) {
    let kc = PI / width_m;
    let k2 = eps_r * mu_r * (omega * omega * EPS_0 * MU_0) - kc * kc;
    let beta = k2.sqrt();
    let z = omega * MU_0 * mu_r / beta;
    (beta, z)
}

/// `S11` at a single angular frequency.
pub fn s11_at(cfg: &WaveguideConfig, omega: f64) -> Result<Complex64, OracleError> {
    cfg.check()?;
    let cutoff = cfg.geometry.cutoff();
    if omega.partial_cmp(&cutoff) != Some(std::cmp::Ordering::Greater) {
        return Err(OracleError::Evanescent { omega, cutoff });
    }
    let a = cfg.geometry.width_mm * 1e-3;
    let one = Complex64::from(1.0);
    let (beta0, z0) = te10(omega, a, one, one);
    let (beta_d, z_d) = te10(omega, a, cfg.eps_r(omega), cfg.mu_r(omega));
    let l1 = cfg.offset_mm * 1e-3;
    let l2 = cfg.inlay_length_mm * 1e-3;
    let l3 = cfg.geometry.length_mm * 1e-3 - l1 - l2;
    let m = mul(
        &mul(&line_section(z0, beta0, l1), &line_section(z_d, beta_d, l2)),
        &line_section(z0, beta0, l3),
    );
    let [[am, bm], [cm, dm]] = m;
    let num = am + bm / z0 - cm * z0 - dm;
    let den = am + bm / z0 + cm * z0 + dm;
    Ok(num / den)
}

/// `S11` at every frequency of the grid.
pub fn waveguide_eval(
    cfg: &WaveguideConfig,
    grid: &FrequencyGrid,
) -> Result<SParamSample, OracleError> {
    grid.points()
        .iter()
        .map(|w| s11_at(cfg, *w))
        .collect::<Result<Vec<_>, _>>()
        .map(SParamSample)
}

/// The waveguide as a per-frequency high-fidelity oracle.
#[derive(Debug)]
pub struct WaveguideOracle {
    geometry: WaveguideGeometry,
    grid: FrequencyGrid,
    calls: AtomicU64,
}

impl WaveguideOracle {
    pub fn new(geometry: WaveguideGeometry, grid: FrequencyGrid) -> Result<Self, OracleError> {
        let cutoff = geometry.cutoff();
        if let Some(w) = grid
            .points()
            .iter()
            .find(|w| w.partial_cmp(&&cutoff) != Some(std::cmp::Ordering::Greater))
        {
            return Err(OracleError::Evanescent { omega: *w, cutoff });
        }
        Ok(Self {
            geometry,
            grid,
            calls: AtomicU64::new(0),
        })
    }

    pub fn geometry(&self) -> WaveguideGeometry {
        self.geometry
    }
}

impl Oracle for WaveguideOracle {
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    fn cost_unit(&self) -> CostUnit {
        CostUnit::FrequencyEvaluations
    }

    fn dimension(&self) -> Option<usize> {
        Some(PARAMETER_COUNT)
    }

    fn eval_at(&self, p: &[f64], index: usize) -> Result<Complex64, OracleError> {
        let omega = *self
            .grid
            .points()
            .get(index)
            .ok_or(OracleError::FrequencyIndex {
                index,
                len: self.grid.len(),
            })?;
        let cfg = WaveguideConfig::from_params(self.geometry, p)?;
        let s = s11_at(&cfg, omega)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(s)
    }

    fn eval_all(&self, p: &[f64]) -> Result<SParamSample, OracleError> {
        let cfg = WaveguideConfig::from_params(self.geometry, p)?;
        let s = waveguide_eval(&cfg, &self.grid)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(s)
    }

    fn invocations(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::from_ghz(6.5, 7.5, 11).unwrap()
    }

    fn cfg(p: [f64; 4]) -> WaveguideConfig {
        WaveguideConfig::from_params(WaveguideGeometry::default(), &p).unwrap()
    }

    /// Input-impedance recursion from the matched load back to port 1,
    /// written independently of the ABCD cascade.
    fn impedance_route(c: &WaveguideConfig, omega: f64) -> Complex64 {
        let a = c.geometry.width_mm * 1e-3;
        let kc2 = (PI / a).powi(2);
        let k0_2 = omega * omega / (SPEED_OF_LIGHT * SPEED_OF_LIGHT);
        let beta0 = Complex64::from(k0_2 - kc2).sqrt();
        let zv = omega * MU_0 / beta0;
        let er = c.eps_r(omega);
        let mr = c.mu_r(omega);
        let beta_d = (er * mr * k0_2 - kc2).sqrt();
        let zd = omega * MU_0 * mr / beta_d;
        let j = Complex64::i();
        let input = |z: Complex64, b: Complex64, l: f64, zl: Complex64| {
            let t = (b * l).tan();
            z * (zl + j * z * t) / (z + j * zl * t)
        };
        let l3 = (c.geometry.length_mm - c.inlay_length_mm - c.offset_mm) * 1e-3;
        let z3 = input(zv, beta0, l3, zv);
        let z2 = input(zd, beta_d, c.inlay_length_mm * 1e-3, z3);
        let z1 = input(zv, beta0, c.offset_mm * 1e-3, z2);
        (z1 - zv) / (z1 + zv)
    }

    #[test]
    fn matches_impedance_recursion() {
        for p in [
            [10.36, 4.76, 0.58, 0.64],
            [8.0, 1.0, 0.3, 0.9],
            [13.1, 7.6, 0.85, 0.35],
        ] {
            let c = cfg(p);
            for w in grid().points() {
                let a = s11_at(&c, *w).unwrap();
                let b = impedance_route(&c, *w);
                assert!((a - b).norm() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn no_inlay_is_matched() {
        let s = waveguide_eval(&cfg([0.0, 4.0, 0.5, 0.5]), &grid()).unwrap();
        assert!(s.values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn nominal_design_meets_threshold() {
        let s = waveguide_eval(&cfg([10.36, 4.76, 0.58, 0.64]), &grid()).unwrap();
        assert!(s.db().iter().all(|d| *d < -24.0), "{:?}", s.db());
    }

    #[test]
    fn passive_over_parameter_box() {
        let lo = [7.36, 1.76, 0.28, 0.34];
        let hi = [13.36, 7.76, 0.88, 0.94];
        for corner in 0..16u32 {
            let p: Vec<f64> = (0..4)
                .map(|i| if corner >> i & 1 == 1 { hi[i] } else { lo[i] })
                .collect();
            let s = waveguide_eval(&cfg([p[0], p[1], p[2], p[3]]), &grid()).unwrap();
            assert!(s.values().iter().all(|v| v.norm() <= 1.0 + 1e-10));
        }
    }

    #[test]
    fn continuous_in_parameters() {
        let base = [10.36, 4.76, 0.58, 0.64];
        let w = grid().points()[5];
        let s0 = s11_at(&cfg(base), w).unwrap();
        for k in 0..4 {
            let mut p = base;
            p[k] += 1e-7;
            let s1 = s11_at(&cfg(p), w).unwrap();
            assert!((s1 - s0).norm() < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_geometry_and_cutoff() {
        assert!(matches!(
            WaveguideConfig::from_params(WaveguideGeometry::default(), &[25.0, 10.0, 0.5, 0.5])
                .and_then(|c| s11_at(&c, 4.4e10)),
            Err(OracleError::Geometry(_))
        ));
        let narrow = WaveguideGeometry {
            width_mm: 10.0,
            length_mm: 30.0,
        };
        assert!(matches!(
            WaveguideOracle::new(narrow, grid()),
            Err(OracleError::Evanescent { .. })
        ));
    }
}
