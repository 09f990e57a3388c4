//! Experiment driver: one configuration → one table row, sweeps over the
//! reference table grids, and CSV / markdown emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::assembly::{assemble_penalty_q, assemble_system};
use crate::error::{Error, Result};
use crate::geometry::{build_partition, cartesian_quad_mesh, load_mesh, structured_tri_mesh, MeshSet};
use crate::hp_space::{build_dofmap, DofMap};
use crate::interface::{build_transform, eliminate_interior, transform_schur};
use crate::krylov::{pcg, Identity, PcgOptions, PcgReport};
use crate::linalg::CsrMatrix;
use crate::par;
use crate::precond::{
    assemble_p, assemble_pd, assemble_pstar, edge_blocks, vertex_matrix, EdgeMass, POptions, PreconditionerHandle, Variant,
};

pub const DEFAULT_INTERFACE_CAP: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridKind {
    Structured,
    Cartesian,
    File,
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(GridKind::Structured),
            "cartesian" => Ok(GridKind::Cartesian),
            "file" => Ok(GridKind::File),
            _ => Err(Error::invalid(format!("unknown grid `{s}` (structured, cartesian, file)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "md" | "markdown" => Ok(OutputFormat::Markdown),
            _ => Err(Error::invalid(format!("unknown format `{s}` (csv, md)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub grid: GridKind,
    pub level: usize,
    /// Global refinement: `2^r` cells per unit length. Ignored for Cartesian grids.
    pub refine: usize,
    pub degree: usize,
    pub alpha: f64,
    pub precond: Variant,
    pub tol: f64,
    pub maxit: usize,
    pub mesh: Option<PathBuf>,
    /// Edge mass inside `K̂`; `None` picks the grid preset (see [`edge_settings`](Self::edge_settings)).
    pub edge_mass: Option<EdgeMass>,
    pub edge_weight: Option<f64>,
    pub literal_sqrt: bool,
    pub interface_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridKind::Structured,
            level: 2,
            refine: 3,
            degree: 1,
            alpha: crate::assembly::DEFAULT_ALPHA,
            precond: Variant::P,
            tol: 1e-9,
            maxit: 2000,
            mesh: None,
            edge_mass: None,
            edge_weight: None,
            literal_sqrt: false,
            interface_cap: DEFAULT_INTERFACE_CAP,
        }
    }
}

impl ExperimentConfig {
    pub fn structured(level: usize, refine: usize, degree: usize, precond: Variant) -> Self {
        Self { level, refine, degree, precond, ..Self::default() }
    }

    pub fn cartesian(level: usize, degree: usize, precond: Variant) -> Self {
        Self { grid: GridKind::Cartesian, level, refine: level, degree, precond, ..Self::default() }
    }

    /// Edge mass and edge weight for `P`. The presets are lumped mass with
    /// unit weight on triangular grids and consistent mass with weight 2 on
    /// Cartesian (p-version) grids; these reproduce the reference tables.
    pub fn edge_settings(&self) -> (EdgeMass, f64) {
        let (mass, weight) = match self.grid {
            GridKind::Cartesian => (EdgeMass::Consistent, 2.0),
            GridKind::Structured | GridKind::File => (EdgeMass::Lumped, 1.0),
        };
        (self.edge_mass.unwrap_or(mass), self.edge_weight.unwrap_or(weight))
    }

    pub fn validate(&self) -> Result<()> {
        if self.level == 0 {
            return Err(Error::invalid("level must be at least 1"));
        }
        if self.grid == GridKind::Structured && self.refine < self.level {
            return Err(Error::invalid(format!(
                "refinement {} is coarser than the partition level {}",
                self.refine, self.level
            )));
        }
        if self.grid == GridKind::File && self.mesh.is_none() {
            return Err(Error::invalid("grid=file requires a mesh path"));
        }
        if self.degree == 0 {
            return Err(Error::invalid("degree must be at least 1"));
        }
        if let Some(w) = self.edge_weight {
            if !(w > 0.0) {
                return Err(Error::invalid(format!("edge weight must be positive, got {w}")));
            }
        }
        if !(self.tol > 0.0) || self.maxit == 0 {
            return Err(Error::invalid("tol must be positive and maxit nonzero"));
        }
        Ok(())
    }

    /// Apply `key=value` settings; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::invalid(format!("invalid value `{value}` for {what}"));
        match key {
            "grid" => self.grid = value.parse()?,
            "level" => self.level = value.parse().map_err(|_| bad(key))?,
            "refine" => self.refine = value.parse().map_err(|_| bad(key))?,
            "degree" => self.degree = value.parse().map_err(|_| bad(key))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key))?,
            "precond" => self.precond = value.parse()?,
            "tol" => self.tol = value.parse().map_err(|_| bad(key))?,
            "maxit" => self.maxit = value.parse().map_err(|_| bad(key))?,
            "mesh" => self.mesh = Some(PathBuf::from(value)),
            "edge_mass" => self.edge_mass = Some(value.parse()?),
            "edge_weight" => self.edge_weight = Some(value.parse().map_err(|_| bad(key))?),
            "literal_sqrt" => self.literal_sqrt = value.parse().map_err(|_| bad(key))?,
            "interface_cap" => self.interface_cap = value.parse().map_err(|_| bad(key))?,
            _ => return Err(Error::invalid(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }
}

/// Parse a `key = value` file (blank lines and `#` comments allowed).
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_config_text(&text, path)
}

pub fn parse_config_text(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, msg: format!("expected key=value, got `{line}`") });
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Which log factor normalizes the κ column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denominator {
    /// `(1 + ln(H/h))²`
    HVersion,
    /// `(1 + ln p²)²`
    PVersion,
    /// `H/h`
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub n_subdomains: usize,
    pub n_elements: usize,
    pub degree: usize,
    pub alpha: f64,
    pub precond: Variant,
    pub iterations: usize,
    pub kappa: f64,
    pub ratio: f64,
    pub log_factor: f64,
    pub ms: f64,
    pub converged: bool,
}

/// Nominal coarse and fine mesh sizes: `H = 2^{-ℓ}`, `h = 1/√n`, which is
/// `2^{-(r+1/2)}` for `n = 2·4^r` elements.
pub fn nominal_sizes(level: usize, n_elements: usize) -> (f64, f64) {
    (2f64.powi(-(level as i32)), 1.0 / (n_elements as f64).sqrt())
}

pub fn denominator_value(kind: Denominator, h_ratio: f64, degree: usize) -> f64 {
    match kind {
        Denominator::HVersion => (1.0 + h_ratio.ln()).powi(2),
        Denominator::PVersion => (1.0 + ((degree * degree) as f64).ln()).powi(2),
        Denominator::Linear => h_ratio,
    }
}

fn denominator_for(cfg: &ExperimentConfig) -> Denominator {
    match (cfg.precond, &cfg.grid) {
        (Variant::PD, _) => Denominator::Linear,
        (_, GridKind::Cartesian) => Denominator::PVersion,
        _ => Denominator::HVersion,
    }
}

pub fn build_mesh(cfg: &ExperimentConfig) -> Result<MeshSet> {
    let part = build_partition(cfg.level)?;
    match cfg.grid {
        GridKind::Structured => structured_tri_mesh(&part, cfg.refine, cfg.degree),
        GridKind::Cartesian => cartesian_quad_mesh(&part, cfg.degree),
        GridKind::File => load_mesh(cfg.mesh.as_deref().expect("validated"), &part),
    }
}

/// Everything needed to solve the interface problem for one configuration.
pub struct InterfaceProblem {
    pub meshset: MeshSet,
    pub dofmap: DofMap,
    /// `S` in the nodal basis.
    pub schur: CsrMatrix,
    pub rhs: Vec<f64>,
}

pub fn build_interface_problem(cfg: &ExperimentConfig, meshset: MeshSet, dofmap: DofMap) -> Result<InterfaceProblem> {
    let sys = assemble_system(&meshset, &dofmap, cfg.alpha, &|_| 1.0)?;
    let (op, g) = eliminate_interior(&sys)?;
    Ok(InterfaceProblem { schur: op.assemble(), rhs: g, meshset, dofmap })
}

/// Solve with the configured preconditioner. `NONE` runs plain CG on `S`
/// itself; the other variants act on the transformed `S̃`.
pub fn solve_interface(cfg: &ExperimentConfig, prob: &InterfaceProblem) -> Result<(Vec<f64>, PcgReport)> {
    let opts = PcgOptions { tol: cfg.tol, maxit: cfg.maxit };
    if cfg.precond == Variant::None {
        return pcg(&prob.schur, &Identity, &prob.rhs, opts);
    }
    let t = build_transform(&prob.dofmap);
    let (s_tilde, g_tilde) = transform_schur(&prob.schur, &prob.rhs, &t);
    let handle: PreconditionerHandle = match cfg.precond {
        Variant::P => {
            let (mass, edge_weight) = cfg.edge_settings();
            let blocks = edge_blocks(&prob.dofmap, &prob.meshset.partition.macro_edges, mass);
            let q = assemble_penalty_q(&prob.meshset, &prob.dofmap, cfg.alpha)?;
            let opts = POptions { edge_weight, literal_sqrt: cfg.literal_sqrt };
            assemble_p(&blocks, &vertex_matrix(&prob.dofmap), &q, &t, opts)?
        }
        Variant::PStar => assemble_pstar(&s_tilde, &prob.dofmap)?,
        Variant::PD => assemble_pd(&s_tilde, &prob.dofmap)?,
        Variant::None => unreachable!(),
    };
    let (ut, report) = pcg(&s_tilde, &handle, &g_tilde, opts)?;
    Ok((t.apply_rt(&ut), report))
}

/// Outcome of one table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellResult {
    Done(TableRow),
    Skipped { reason: String },
}

fn describe(cfg: &ExperimentConfig) -> String {
    format!(
        "grid={:?} level={} refine={} degree={} alpha={} precond={}",
        cfg.grid, cfg.level, cfg.refine, cfg.degree, cfg.alpha, cfg.precond
    )
}

/// Full pipeline for one configuration. Cells whose interface exceeds the
/// configured cap come back as skipped.
pub fn run_cell(cfg: &ExperimentConfig) -> Result<CellResult> {
    cfg.validate()?;
    let start = Instant::now();
    let annotate = |e: Error| Error::InvalidArgument(format!("{} [{}]", e, describe(cfg)));
    let meshset = build_mesh(cfg).map_err(annotate)?;
    let dofmap = build_dofmap(&meshset).map_err(annotate)?;
    if dofmap.n_trace() > cfg.interface_cap {
        return Ok(CellResult::Skipped {
            reason: format!("{} interface dofs exceed cap {}", dofmap.n_trace(), cfg.interface_cap),
        });
    }
    let n_elements = meshset.n_elements();
    let n_subdomains = meshset.partition.n_subdomains();
    let prob = build_interface_problem(cfg, meshset, dofmap).map_err(annotate)?;
    let (_, report) = solve_interface(cfg, &prob).map_err(annotate)?;
    let (h_coarse, h_fine) = nominal_sizes(cfg.level, n_elements);
    let denom = denominator_value(denominator_for(cfg), h_coarse / h_fine, cfg.degree);
    Ok(CellResult::Done(TableRow {
        n_subdomains,
        n_elements,
        degree: cfg.degree,
        alpha: cfg.alpha,
        precond: cfg.precond,
        iterations: report.iterations,
        kappa: report.kappa,
        ratio: report.kappa / denom,
        log_factor: denom,
        ms: start.elapsed().as_secs_f64() * 1e3,
        converged: report.converged,
    }))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TableRow> {
    match run_cell(cfg)? {
        CellResult::Done(row) => Ok(row),
        CellResult::Skipped { reason } => Err(Error::invalid(format!("cell skipped: {reason}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    T5,
    CondS,
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(TableId::T1),
            "2" => Ok(TableId::T2),
            "3" => Ok(TableId::T3),
            "4" => Ok(TableId::T4),
            "5" => Ok(TableId::T5),
            "condS" | "conds" => Ok(TableId::CondS),
            _ => Err(Error::invalid(format!("unknown table `{s}` (1-5, condS)"))),
        }
    }
}

/// Column axis of a table: fine mesh size or polynomial degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Elements,
    Degree,
}

#[derive(Debug, Clone)]
pub struct TableCell {
    pub config: ExperimentConfig,
    /// Reference κ and iteration count, where available.
    pub reference: Option<(f64, Option<usize>)>,
    pub result: Option<CellResult>,
}

#[derive(Debug, Clone)]
pub struct TableSection {
    pub title: String,
    pub axis: Axis,
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone)]
pub struct TableOptions {
    pub interface_cap: usize,
    /// Directory with user meshes named `N<N>_n<n>.mesh` for the
    /// unstructured tables.
    pub mesh_dir: Option<PathBuf>,
    /// Restrict the sweep to `n ≤ max_elements` (h-tables) or
    /// `p ≤ max_degree` (p-tables).
    pub max_elements: Option<usize>,
    pub max_degree: Option<usize>,
    pub levels: Option<Vec<usize>>,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { interface_cap: DEFAULT_INTERFACE_CAP, mesh_dir: None, max_elements: None, max_degree: None, levels: None }
    }
}

const T1_P: [&[f64]; 4] = [
    &[3.11, 4.88, 7.50, 10.84, 14.79],
    &[3.30, 5.25, 8.00, 11.42],
    &[3.35, 5.36, 8.16],
    &[3.37, 5.39],
];
const T1_PSTAR: [&[f64]; 4] = [
    &[2.26, 4.04, 7.01, 11.00, 15.83],
    &[2.42, 4.49, 7.85, 12.28],
    &[2.47, 4.60, 8.07],
    &[2.48, 4.63],
];
const T2_P: [&[f64]; 4] = [
    &[2.87, 4.69, 7.35, 10.68, 14.62],
    &[3.05, 5.01, 7.75, 11.13],
    &[3.09, 5.08, 7.89],
    &[3.11, 5.11],
];
const T2_PSTAR: [&[f64]; 4] = [
    &[1.84, 3.24, 5.51, 8.44, 12.00],
    &[2.01, 3.77, 6.35, 9.76],
    &[2.04, 3.90, 6.58],
    &[2.05, 3.93],
];
const T3_STRUCT: [&[f64]; 4] = [
    &[11.51, 23.19, 47.40, 95.21, 190.69],
    &[11.58, 23.03, 47.16, 95.02],
    &[11.55, 22.96, 47.12],
    &[11.44, 22.88],
];
const T3_UNSTRUCT: [&[f64]; 4] = [
    &[9.45, 18.63, 39.13, 75.38, 148.93],
    &[8.93, 18.30, 38.88, 78.82],
    &[8.80, 17.85, 38.59],
    &[8.75, 17.64],
];
const T4: [[(f64, usize); 5]; 4] = [
    [(5.1e1, 5), (2.7e2, 8), (6.2e2, 13), (1.4e3, 18), (3.4e3, 28)],
    [(3.2e2, 22), (8.4e2, 42), (2.0e3, 69), (4.6e3, 101), (1.1e4, 153)],
    [(1.2e3, 90), (3.2e3, 150), (7.6e3, 231), (1.8e4, 312), (4.3e4, 446)],
    [(4.7e3, 195), (1.3e4, 294), (3.0e4, 462), (7.0e4, 634), (1.7e5, 886)],
];
const T5_P: [[f64; 5]; 4] = [
    [7.14, 9.04, 12.06, 14.15, 16.48],
    [9.24, 9.93, 15.25, 15.99, 20.25],
    [10.03, 10.14, 16.34, 16.57, 21.53],
    [10.24, 10.19, 16.61, 16.71, 21.84],
];
const T5_PSTAR: [[f64; 5]; 4] = [
    [1.88, 2.56, 3.75, 4.64, 5.70],
    [4.60, 5.23, 8.71, 9.38, 12.25],
    [6.18, 6.03, 10.35, 10.79, 14.33],
    [6.55, 6.25, 10.83, 11.20, 14.94],
];

const MAX_REFINE: usize = 7;

fn h_sweep(
    opts: &TableOptions,
    levels: &[usize],
    variant: Variant,
    unstructured: bool,
    refs: Option<&[&[f64]; 4]>,
) -> Vec<TableCell> {
    let mut cells = Vec::new();
    for &level in levels {
        for r in level + 1..=MAX_REFINE {
            let n = 2 * 4usize.pow(r as u32);
            if opts.max_elements.is_some_and(|m| n > m) {
                continue;
            }
            let mut cfg = ExperimentConfig::structured(level, r, 1, variant);
            cfg.interface_cap = opts.interface_cap;
            let mut skip = None;
            if unstructured {
                cfg.grid = GridKind::File;
                let file = opts.mesh_dir.as_ref().map(|d| d.join(format!("N{}_n{}.mesh", 4usize.pow(level as u32), n)));
                match file {
                    Some(f) if f.exists() => cfg.mesh = Some(f),
                    _ => skip = Some("no user mesh supplied".to_string()),
                }
            }
            let reference = refs
                .and_then(|t| level.checked_sub(2).and_then(|i| t.get(i)))
                .and_then(|row| row.get(r - level - 1))
                .map(|&k| (k, None));
            cells.push(TableCell { config: cfg, reference, result: skip.map(|reason| CellResult::Skipped { reason }) });
        }
    }
    cells
}

fn p_sweep(opts: &TableOptions, variant: Variant, refs: &dyn Fn(usize, usize) -> (f64, Option<usize>)) -> Vec<TableCell> {
    let levels = opts.levels.clone().unwrap_or_else(|| vec![1, 2, 3, 4]);
    let mut cells = Vec::new();
    for &level in &levels {
        for p in 2..=6 {
            if opts.max_degree.is_some_and(|m| p > m) {
                continue;
            }
            let mut cfg = ExperimentConfig::cartesian(level, p, variant);
            cfg.interface_cap = opts.interface_cap;
            let reference = (1..=4).contains(&level).then(|| refs(level - 1, p - 2));
            cells.push(TableCell { config: cfg, reference, result: None });
        }
    }
    cells
}

/// The sections of a reference table, without running them.
pub fn table_layout(id: TableId, opts: &TableOptions) -> Vec<TableSection> {
    let h_levels = opts.levels.clone().unwrap_or_else(|| vec![2, 3, 4, 5]);
    let section = |title: &str, axis, cells| TableSection { title: title.to_string(), axis, cells };
    match id {
        TableId::T1 => vec![
            section("P, structured, p=1", Axis::Elements, h_sweep(opts, &h_levels, Variant::P, false, Some(&T1_P))),
            section("Pstar, structured, p=1", Axis::Elements, h_sweep(opts, &h_levels, Variant::PStar, false, Some(&T1_PSTAR))),
        ],
        TableId::T2 => vec![
            section("P, unstructured, p=1", Axis::Elements, h_sweep(opts, &h_levels, Variant::P, true, Some(&T2_P))),
            section("Pstar, unstructured, p=1", Axis::Elements, h_sweep(opts, &h_levels, Variant::PStar, true, Some(&T2_PSTAR))),
        ],
        TableId::T3 => vec![
            section("PD, structured, p=1", Axis::Elements, h_sweep(opts, &h_levels, Variant::PD, false, Some(&T3_STRUCT))),
            section("PD, unstructured, p=1", Axis::Elements, h_sweep(opts, &h_levels, Variant::PD, true, Some(&T3_UNSTRUCT))),
        ],
        TableId::T4 => vec![section(
            "none, Cartesian",
            Axis::Degree,
            p_sweep(opts, Variant::None, &|l, p| (T4[l][p].0, Some(T4[l][p].1))),
        )],
        TableId::T5 => vec![
            section("P, Cartesian", Axis::Degree, p_sweep(opts, Variant::P, &|l, p| (T5_P[l][p], None))),
            section("Pstar, Cartesian", Axis::Degree, p_sweep(opts, Variant::PStar, &|l, p| (T5_PSTAR[l][p], None))),
        ],
        TableId::CondS => {
            let levels = opts.levels.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5]);
            vec![section("none, structured, p=1", Axis::Elements, h_sweep(opts, &levels, Variant::None, false, None))]
        }
    }
}

/// Run every cell of a table. Cells run concurrently; failures inside a
/// cell are reported as skipped with the error text.
pub fn reproduce_table(id: TableId, opts: &TableOptions) -> Vec<TableSection> {
    let mut sections = table_layout(id, opts);
    for s in &mut sections {
        let results = par::map(&s.cells, |c| match &c.result {
            Some(r) => r.clone(),
            None => run_cell(&c.config).unwrap_or_else(|e| CellResult::Skipped { reason: e.to_string() }),
        });
        for (c, r) in s.cells.iter_mut().zip(results) {
            c.result = Some(r);
        }
    }
    sections
}

/// κ as printed in the tables: two decimals below 100, else one-decimal
/// scientific notation such as `5.1e+1`.
pub fn format_kappa(k: f64) -> String {
    if k < 100.0 {
        return format!("{k:.2}");
    }
    let mut exp = k.log10().floor() as i32;
    let mut mant = k / 10f64.powi(exp);
    if (mant * 10.0).round() >= 100.0 {
        exp += 1;
        mant /= 10.0;
    }
    format!("{mant:.1}e{}{exp}", if exp < 0 { "-" } else { "+" }).replace("e+-", "e-")
}

pub const CSV_HEADER: &str = "N,n,p,alpha,precond,iters,kappa,ratio,logfactor,ms";

pub fn csv_line(row: &TableRow) -> String {
    format!(
        "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.1}",
        row.n_subdomains,
        row.n_elements,
        row.degree,
        row.alpha,
        row.precond,
        row.iterations,
        row.kappa,
        row.ratio,
        row.log_factor,
        row.ms
    )
}

pub fn render_csv(rows: &[TableRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&csv_line(r));
        s.push('\n');
    }
    s
}

fn cell_text(cell: &TableCell) -> String {
    let body = match &cell.result {
        Some(CellResult::Done(r)) if r.precond == Variant::None => format!("{} ({})", format_kappa(r.kappa), r.iterations),
        Some(CellResult::Done(r)) => format!("{} ({:.2})", format_kappa(r.kappa), r.ratio),
        Some(CellResult::Skipped { .. }) => "SKIPPED".to_string(),
        None => "-".to_string(),
    };
    match cell.reference {
        Some((k, Some(it))) => format!("{body} [ref {} ({it})]", format_kappa(k)),
        Some((k, None)) => format!("{body} [ref {}]", format_kappa(k)),
        None => body,
    }
}

fn column_key(cell: &TableCell, axis: Axis) -> usize {
    match axis {
        Axis::Elements => match &cell.result {
            Some(CellResult::Done(r)) => r.n_elements,
            _ => 2 * 4usize.pow(cell.config.refine as u32),
        },
        Axis::Degree => cell.config.degree,
    }
}

/// Markdown tables: subdomain count down, `n` or `p` across.
pub fn render_markdown(sections: &[TableSection]) -> String {
    let mut out = String::new();
    for s in sections {
        let mut cols: Vec<usize> = s.cells.iter().map(|c| column_key(c, s.axis)).collect();
        cols.sort_unstable();
        cols.dedup();
        let mut levels: Vec<usize> = s.cells.iter().map(|c| c.config.level).collect();
        levels.sort_unstable();
        levels.dedup();
        let axis = match s.axis {
            Axis::Elements => "n",
            Axis::Degree => "p",
        };
        let _ = writeln!(out, "### {}\n", s.title);
        let _ = write!(out, "| N \\ {axis} |");
        for c in &cols {
            let _ = write!(out, " {c} |");
        }
        out.push('\n');
        out.push_str("|---|");
        out.push_str(&"---|".repeat(cols.len()));
        out.push('\n');
        for &level in &levels {
            let _ = write!(out, "| {} |", 4usize.pow(level as u32));
            for &c in &cols {
                let text = s
                    .cells
                    .iter()
                    .find(|cell| cell.config.level == level && column_key(cell, s.axis) == c)
                    .map(cell_text)
                    .unwrap_or_default();
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn completed_rows(sections: &[TableSection]) -> Vec<TableRow> {
    sections
        .iter()
        .flat_map(|s| &s.cells)
        .filter_map(|c| match &c.result {
            Some(CellResult::Done(r)) => Some(r.clone()),
            _ => None,
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Write rows as CSV or as a one-section markdown table.
pub fn emit(rows: &[TableRow], format: OutputFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("nothing to emit"));
    }
    let text = match format {
        OutputFormat::Csv => render_csv(rows),
        OutputFormat::Markdown => {
            // one element per subdomain means a p-version sweep
            let by_degree = rows.iter().all(|r| r.n_elements == r.n_subdomains);
            let cells = rows
                .iter()
                .map(|r| {
                    let level = (r.n_subdomains as f64).log(4.0).round() as usize;
                    let config = if by_degree {
                        ExperimentConfig::cartesian(level, r.degree, r.precond)
                    } else {
                        let refine = ((r.n_elements as f64 / 2.0).log(4.0)).round() as usize;
                        ExperimentConfig::structured(level, refine, r.degree, r.precond)
                    };
                    TableCell { config, reference: None, result: Some(CellResult::Done(r.clone())) }
                })
                .collect();
            let axis = if by_degree { Axis::Degree } else { Axis::Elements };
            render_markdown(&[TableSection { title: "results".into(), axis, cells }])
        }
    };
    write_file(path, &text)
}

/// Write a reproduced table: markdown keeps skipped cells and reference
/// values, CSV lists completed rows only.
pub fn emit_sections(sections: &[TableSection], format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => render_csv(&completed_rows(sections)),
        OutputFormat::Markdown => render_markdown(sections),
    };
    write_file(path, &text)
}
