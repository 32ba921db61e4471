//! Experiment configuration: one TOML document, every key optional.
//!
//! Missing keys take the defaults below. Overrides are dotted paths into
//! the resolved document (`grid.n=64`, `data.0.amplitude=0.2`); a path that
//! does not exist in the resolved document is rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinrad::diagnostics::DiagnosticsConfig;
use spinrad::grid::DataKind;
use spinrad::propagate::SUPPORT_LEVEL;
use spinrad::scattering::{CgConfig, LinearMapHandle, ScatterConfig};
use spinrad::{DataSpec, Grid, NullFormCoeffs, NullGrid, Sphere, Spinor, TimeDirection, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub grid: GridConfig,
    /// Initial data: the superposition of these profiles.
    pub data: Vec<DataSpec>,
    pub evolve: EvolveSection,
    pub diagnostics: DiagnosticsConfig,
    pub null_grid: NullGridSection,
    pub scatter: ScatterSection,
    pub algebra: AlgebraSection,
    pub convergence: ConvergenceSection,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    /// `dt = h / steps_per_cell`.
    pub steps_per_cell: f64,
    pub t_final: f64,
    pub snapshot_every: usize,
    pub direction: TimeDirection,
    /// Evolve `Dφ = N(φ,φ)` with `scatter.coeffs` instead of the free equation.
    pub nonlinear: bool,
    /// Highest order `K` of the vector-field energies in the diagnostics log.
    pub energy_order: usize,
    /// Times at which the Klainerman–Sobolev ratio is evaluated.
    pub ks_times: Vec<f64>,
    /// Write every kept snapshot as a binary dump.
    pub dump_snapshots: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullGridSection {
    pub s_min: f64,
    pub s_max: f64,
    /// `Δs` in units of `h`.
    pub ds_cells: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    /// Extraction radii; the largest is `M`.
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterSection {
    /// Use the nonlinear maps in `scatter-forward`/`scatter-inverse`/`radiation`.
    pub nonlinear: bool,
    pub coeffs: NullFormCoeffs,
    pub smallness: f64,
    pub source_every: usize,
    pub picard_max_iterations: usize,
    pub picard_tolerance: f64,
    pub cg: CgConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgebraSection {
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Any of `splitting`, `extraction`, `isometry`.
    pub ladders: Vec<String>,
    /// Semilinear runs at `dt = h / k` for each entry.
    pub steps_per_cell: Vec<f64>,
    pub splitting_t_final: f64,
    /// Extraction radii `M`; each point extracts at `{M, 2M}`.
    pub radii: Vec<f64>,
    /// Retarded-time half window of the extraction ladder.
    pub half_window: f64,
    /// `(c, n, L)`: grid `n`, box `L`, radius `M = 10c`, window `±5c`,
    /// sphere `20c × 40c`; the data are fixed.
    pub isometry: Vec<(f64, usize, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub free_balance: f64,
    pub forced_balance: f64,
    pub free_charge_drift: f64,
    pub ks_spread: f64,
    pub isometry: f64,
    pub round_trip: f64,
    pub adjoint: f64,
    pub splitting_order: f64,
    pub extraction_exponent: f64,
    pub isometry_order: f64,
}

const DEFAULT_N: usize = 96;
const DEFAULT_L: f64 = 40.0;

fn default_polarization() -> Spinor {
    let s = Spinor::new(C64::new(1.0, 0.0), C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(-0.5, 0.1));
    s * (1.0 / s.norm())
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let h = DEFAULT_L / DEFAULT_N as f64;
        ExperimentConfig {
            seed: 20240917,
            out: PathBuf::from("out"),
            grid: GridConfig::default(),
            data: vec![DataSpec::gaussian([0.0; 3], 4.0 * h, default_polarization(), 0.4)],
            evolve: EvolveSection::default(),
            diagnostics: DiagnosticsConfig::default(),
            null_grid: NullGridSection::default(),
            scatter: ScatterSection::default(),
            algebra: AlgebraSection::default(),
            convergence: ConvergenceSection::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: DEFAULT_N, length: DEFAULT_L }
    }
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection {
            steps_per_cell: 4.0,
            t_final: 10.0,
            snapshot_every: 24,
            direction: TimeDirection::Forward,
            nonlinear: false,
            energy_order: 2,
            ks_times: vec![0.0, 2.5, 5.0, 7.5, 10.0],
            dump_snapshots: true,
        }
    }
}

impl Default for NullGridSection {
    fn default() -> Self {
        NullGridSection { s_min: -5.0, s_max: 5.0, ds_cells: 1.0, n_theta: 20, n_phi: 40, radii: vec![5.0, 10.0] }
    }
}

impl Default for ScatterSection {
    fn default() -> Self {
        let s = ScatterConfig::default();
        ScatterSection {
            nonlinear: false,
            coeffs: s.coeffs,
            smallness: 5.0,
            source_every: s.source_every,
            picard_max_iterations: s.picard_max_iterations,
            picard_tolerance: s.picard_tolerance,
            cg: s.cg,
        }
    }
}

impl Default for AlgebraSection {
    fn default() -> Self {
        AlgebraSection { samples: 256 }
    }
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            ladders: vec!["splitting".into(), "extraction".into()],
            steps_per_cell: vec![4.0, 8.0, 16.0],
            splitting_t_final: 3.75,
            radii: vec![3.2, 4.0, 5.0, 6.4],
            half_window: 1.5,
            isometry: vec![(1.0, 96, 40.0), (1.25, 128, 128.0 / 3.0), (1.5, 180, 50.0)],
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            free_balance: 1e-10,
            forced_balance: 1e-4,
            free_charge_drift: 1e-11,
            ks_spread: 3.0,
            isometry: 0.02,
            round_trip: 0.05,
            adjoint: 1e-10,
            splitting_order: 1.9,
            extraction_exponent: 0.4,
            isometry_order: 1.0,
        }
    }
}

/// Radius beyond which a profile drops below [`SUPPORT_LEVEL`] of its peak.
pub fn data_radius(spec: &DataSpec) -> f64 {
    let c = spec.center;
    let r0 = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    match spec.kind {
        DataKind::Gaussian => r0 + spec.sigma * (-2.0 * SUPPORT_LEVEL.ln()).sqrt(),
        DataKind::Bump => r0 + spec.sigma,
        DataKind::PlaneWaveMode => f64::INFINITY,
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid, String> {
        Grid::new(self.grid.n, self.grid.length).map_err(|e| e.to_string())
    }

    pub fn dt(&self) -> f64 {
        self.grid.length / self.grid.n as f64 / self.evolve.steps_per_cell
    }

    /// Support radius of the initial data; zero for zero data.
    pub fn data_radius(&self) -> f64 {
        self.data.iter().filter(|d| d.amplitude != 0.0).map(data_radius).fold(0.0, f64::max)
    }

    pub fn null_grid_for(&self, h: f64) -> Result<NullGrid, String> {
        let ng = &self.null_grid;
        let sphere = Sphere::new(ng.n_theta, ng.n_phi).map_err(|e| e.to_string())?;
        NullGrid::with_step(ng.s_min, ng.s_max, ng.ds_cells * h, sphere).map_err(|e| e.to_string())
    }

    pub fn handle(&self) -> Result<LinearMapHandle, String> {
        let g = self.grid()?;
        let ng = self.null_grid_for(g.h())?;
        LinearMapHandle::new(g, ng, &self.null_grid.radii).map_err(|e| e.to_string())
    }

    pub fn scatter_config(&self) -> ScatterConfig {
        let s = &self.scatter;
        ScatterConfig {
            coeffs: s.coeffs,
            smallness: s.smallness,
            dt: self.dt(),
            source_every: s.source_every,
            picard_max_iterations: s.picard_max_iterations,
            picard_tolerance: s.picard_tolerance,
            cg: s.cg,
        }
    }

    /// Load-time consistency: grid, data inside the box, the retarded-time
    /// window inside the image horizon, and the diagnostics settings.
    pub fn validate(&self) -> Result<(), String> {
        let g = self.grid()?;
        if !(self.evolve.steps_per_cell > 0.0) || !(self.evolve.t_final >= 0.0) || self.evolve.snapshot_every == 0 {
            return Err("evolve: steps_per_cell > 0, t_final >= 0 and snapshot_every >= 1 are required".into());
        }
        let r = self.data_radius();
        if r >= 0.5 * g.length() {
            return Err(format!("data radius {r:.3} does not fit in the box (L/2 = {})", 0.5 * g.length()));
        }
        let h = self.handle()?;
        let horizon = h.horizon(r);
        if h.t_max() > horizon {
            return Err(format!(
                "null grid reaches elapsed time {:.3}, beyond the image horizon L - M - R = {horizon:.3}",
                h.t_max()
            ));
        }
        self.diagnostics.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML of the resolved config, with the
    /// output directory blanked so relocated runs share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        Sha256::digest(c.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads `path` (or the defaults), applies the overrides and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, String> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            toml::from_str::<ExperimentConfig>(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if overrides.is_empty() {
        return Ok(base);
    }
    let mut doc = toml::Value::try_from(&base).map_err(|e| e.to_string())?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    doc.try_into().map_err(|e: toml::de::Error| format!("after overrides: {e}"))
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => w.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.path=value` assignment to an existing key.
pub fn apply_override(doc: &mut toml::Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| format!("override '{assignment}' is not key=value"))?;
    let mut cur = doc;
    for part in path.trim().split('.') {
        cur = match cur {
            toml::Value::Table(t) => t.get_mut(part),
            toml::Value::Array(a) => part.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("unknown config key '{}'", path.trim()))?;
    }
    *cur = parse_value(raw.trim());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn defaults_are_consistent() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_and_indexed_keys() {
        let c = load(None, &["grid.n=64".into(), "data.0.amplitude=0.25".into(), "evolve.nonlinear=true".into()]).unwrap();
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.data[0].amplitude, 0.25);
        assert!(c.evolve.nonlinear);
        assert_ne!(c.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(load(None, &["grid.m=64".into()]).is_err());
        assert!(load(None, &["grid.n".into()]).is_err());
        assert!(toml::from_str::<ExperimentConfig>("[grid]\nsize = 3").is_err());
    }

    #[test]
    fn window_beyond_the_horizon_fails_validation() {
        let c = load(None, &["null_grid.s_max=30.0".into()]).unwrap();
        assert!(c.validate().unwrap_err().contains("horizon"));
    }

    #[test]
    fn gaussian_radius_matches_the_support_level() {
        let d = DataSpec::gaussian([3.0, 4.0, 0.0], 2.0, default_polarization(), 1.0);
        let r = data_radius(&d) - 5.0;
        assert!(((-r * r / 8.0).exp() - SUPPORT_LEVEL).abs() < 1e-12);
    }
}
