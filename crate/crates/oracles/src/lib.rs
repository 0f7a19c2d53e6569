//! Independent reference implementations for the `mdcn` crate.
//!
//! Every reference here is written from the defining formula in double
//! precision (loop convolutions, straight-line block compositions, dense
//! resampling matrices, windowed metric formulas, a scalar Adam, counting by
//! enumeration) and shares no numerical kernel with the production code. The
//! suite runs each production routine next to its reference and reports the
//! deviation.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

pub mod adam;
mod cases;
pub mod gradcheck;
pub mod metrics;
pub mod network;
pub mod reference;
pub mod resample;

pub use cases::equivalence_cases;
pub use gradcheck::gradient_cases;

/// Module whose behaviour a case checks.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Module {
    TensorCore,
    Blocks,
    Model,
    Optim,
    Data,
    Metrics,
}

impl Module {
    pub const ALL: [Module; 6] = [
        Module::TensorCore,
        Module::Blocks,
        Module::Model,
        Module::Optim,
        Module::Data,
        Module::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Module::TensorCore => "tensor-core",
            Module::Blocks => "blocks",
            Module::Model => "model",
            Module::Optim => "optim",
            Module::Data => "data",
            Module::Metrics => "metrics",
        }
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Selection {
    All,
    Module(Module),
    /// Only the finite-difference cases.
    Gradients,
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(Selection::All);
        }
        if s == "gradients" {
            return Ok(Selection::Gradients);
        }
        Module::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .map(Selection::Module)
            .ok_or_else(|| {
                let names: Vec<&str> = Module::ALL.iter().map(|m| m.name()).collect();
                format!("unknown selection `{s}` (all, gradients, {})", names.join(", "))
            })
    }
}

/// How deviations are measured against the tolerance.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Measure {
    /// `max |p − o|`
    Absolute,
    /// `max |p − o| / max(|p|, |o|, 1e-8)`, element by element.
    Relative,
    /// Per group of [`Comparison::groups`]: `max |p − o|` over the group
    /// divided by `max(max |p|, max |o|, 1e-8)` over the same group.
    GroupRelative,
}

/// Production values next to reference values, element for element.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Comparison {
    pub production: Vec<f64>,
    pub oracle: Vec<f64>,
    /// Consecutive group lengths (one per input tensor); empty means one group.
    pub groups: Vec<usize>,
}

impl Comparison {
    pub fn new(production: Vec<f64>, oracle: Vec<f64>) -> Self {
        Comparison {
            production,
            oracle,
            groups: Vec::new(),
        }
    }

    pub fn scalar(production: f64, oracle: f64) -> Self {
        Comparison::new(vec![production], vec![oracle])
    }

    #[allow(clippy::single_range_in_vec_init)]
    fn group_ranges(&self) -> Vec<std::ops::Range<usize>> {
        if self.groups.is_empty() {
            return vec![0..self.production.len()];
        }
        let mut start = 0;
        self.groups
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }
}

pub struct Case {
    pub name: String,
    pub module: Module,
    pub measure: Measure,
    pub tolerance: f64,
    run: Box<dyn Fn() -> mdcn::Result<Comparison>>,
}

impl Case {
    pub fn new(
        name: impl Into<String>,
        module: Module,
        measure: Measure,
        tolerance: f64,
        run: impl Fn() -> mdcn::Result<Comparison> + 'static,
    ) -> Self {
        Case {
            name: name.into(),
            module,
            measure,
            tolerance,
            run: Box::new(run),
        }
    }

    pub fn is_gradient(&self) -> bool {
        self.name.starts_with("grad/")
    }

    fn selected(&self, sel: Selection) -> bool {
        match sel {
            Selection::All => true,
            Selection::Module(m) => self.module == m,
            Selection::Gradients => self.is_gradient(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub case: String,
    pub module: Module,
    /// Production value at the worst element.
    pub production: f64,
    /// Reference value at the worst element.
    pub oracle: f64,
    pub max_abs: f64,
    pub max_rel: f64,
    pub tolerance: f64,
    pub measure: Measure,
    pub passed: bool,
    pub note: String,
}

pub const REPORT_HEADER: &str = "case\tmodule\tproduction\toracle\tmax_abs\tmax_rel\ttolerance\tmeasure\tstatus\tnote";

impl OracleReport {
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{:.12e}\t{:.12e}\t{:.3e}\t{:.3e}\t{:.1e}\t{}\t{}\t{}",
            self.case,
            self.module,
            self.production,
            self.oracle,
            self.max_abs,
            self.max_rel,
            self.tolerance,
            match self.measure {
                Measure::Absolute => "abs",
                Measure::Relative => "rel",
                Measure::GroupRelative => "tensor-rel",
            },
            if self.passed { "pass" } else { "FAIL" },
            self.note
        )
    }
}

pub fn reports_to_tsv(reports: &[OracleReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.tsv_row());
    }
    out
}

pub fn all_passed(reports: &[OracleReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

/// Size of the deliberate error injected by [`SuiteOptions::perturb`].
pub const PERTURBATION: f64 = 1e-3;

#[derive(Clone, Debug, Default)]
pub struct SuiteOptions {
    /// Add [`PERTURBATION`] to the first production value of this case,
    /// to confirm the comparison notices.
    pub perturb: Option<String>,
}

fn compare(case: &Case, cmp: &Comparison) -> OracleReport {
    let mut report = OracleReport {
        case: case.name.clone(),
        module: case.module,
        production: f64::NAN,
        oracle: f64::NAN,
        max_abs: 0.0,
        max_rel: 0.0,
        tolerance: case.tolerance,
        measure: case.measure,
        passed: false,
        note: String::new(),
    };
    let grouped: usize = cmp.groups.iter().sum();
    if cmp.production.len() != cmp.oracle.len()
        || cmp.production.is_empty()
        || (!cmp.groups.is_empty() && grouped != cmp.production.len())
    {
        report.note = format!(
            "length mismatch: production {} vs oracle {}",
            cmp.production.len(),
            cmp.oracle.len()
        );
        return report;
    }
    let mut worst = (0usize, f64::NEG_INFINITY);
    let mut elementwise = (0usize, 0.0f64);
    for range in cmp.group_ranges() {
        let (p, o) = (&cmp.production[range.clone()], &cmp.oracle[range.clone()]);
        let scale = p.iter().chain(o).fold(gradcheck::FLOOR, |m, v| m.max(v.abs()));
        for (i, (&p, &o)) in p.iter().zip(o).enumerate() {
            // infinities must match exactly
            let abs = if p == o { 0.0 } else { (p - o).abs() };
            let rel = if p == o {
                0.0
            } else {
                abs / p.abs().max(o.abs()).max(gradcheck::FLOOR)
            };
            let group_rel = if p == o { 0.0 } else { abs / scale };
            report.max_abs = report.max_abs.max(abs);
            if rel.is_nan() || rel > elementwise.1 {
                elementwise = (range.start + i, if rel.is_nan() { f64::INFINITY } else { rel });
            }
            let key = match case.measure {
                Measure::Absolute => abs,
                Measure::Relative => rel,
                Measure::GroupRelative => group_rel,
            };
            if case.measure == Measure::GroupRelative {
                report.max_rel = report.max_rel.max(group_rel);
            }
            if key.is_nan() || key > worst.1 {
                worst = (range.start + i, if key.is_nan() { f64::INFINITY } else { key });
            }
        }
    }
    if case.measure != Measure::GroupRelative {
        report.max_rel = elementwise.1;
    } else if elementwise.1 > case.tolerance {
        report.note = format!(
            "largest elementwise relative error {:.2e} where |gradient| = {:.2e}",
            elementwise.1,
            cmp.production[elementwise.0].abs().max(cmp.oracle[elementwise.0].abs())
        );
    }
    report.production = cmp.production[worst.0];
    report.oracle = cmp.oracle[worst.0];
    report.passed = worst.1 <= case.tolerance;
    report
}

pub fn run_case(case: &Case, options: &SuiteOptions) -> OracleReport {
    match (case.run)() {
        Ok(mut cmp) => {
            if options.perturb.as_deref() == Some(case.name.as_str()) {
                if let Some(v) = cmp.production.first_mut() {
                    *v += PERTURBATION;
                }
            }
            compare(case, &cmp)
        }
        Err(e) => OracleReport {
            case: case.name.clone(),
            module: case.module,
            production: f64::NAN,
            oracle: f64::NAN,
            max_abs: f64::NAN,
            max_rel: f64::NAN,
            tolerance: case.tolerance,
            measure: case.measure,
            passed: false,
            note: format!("error: {e}"),
        },
    }
}

pub fn all_cases() -> Vec<Case> {
    let mut cases = equivalence_cases();
    cases.extend(gradient_cases());
    cases
}

pub fn run_oracle_suite(selection: Selection, options: &SuiteOptions) -> Vec<OracleReport> {
    all_cases()
        .iter()
        .filter(|c| c.selected(selection))
        .map(|c| run_case(c, options))
        .collect()
}
