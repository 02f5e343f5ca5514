//! Linear all-reduce cost model `T(M) = a + b * M`.
//!
//! A model is either evaluated from the closed-form coefficients of a known
//! collective algorithm given point-to-point network parameters, or fitted
//! from measured `(message size, time)` pairs.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Startup and per-byte coefficients of a linear all-reduce cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllReduceModel {
    /// Message-size independent startup time `a`, seconds.
    pub startup: f64,
    /// Transfer plus reduction time per byte `b`, seconds/byte.
    pub per_byte: f64,
}

impl AllReduceModel {
    /// Builds a model that satisfies `a > 0` and `b >= 0`.
    pub fn new(startup: f64, per_byte: f64) -> Result<Self> {
        let model = Self { startup, per_byte };
        model.validate()?;
        Ok(model)
    }

    /// Builds a model without the `a > 0` requirement.
    ///
    /// The timeline engine accepts any finite non-negative coefficients
    /// (a free network is `a = b = 0`); only the planner needs `a > 0`.
    pub fn unchecked(startup: f64, per_byte: f64) -> Self {
        Self { startup, per_byte }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.startup.is_finite() || self.startup <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "startup a must be finite and > 0, got {:e}",
                self.startup
            )));
        }
        if !self.per_byte.is_finite() || self.per_byte < 0.0 {
            return Err(Error::InvalidModel(format!(
                "per-byte b must be finite and >= 0, got {:e}",
                self.per_byte
            )));
        }
        Ok(())
    }

    /// Time to all-reduce `size_bytes` bytes.
    #[inline]
    pub fn cost(&self, size_bytes: f64) -> f64 {
        self.startup + self.per_byte * size_bytes
    }
}

/// Free function form of [`AllReduceModel::cost`].
#[inline]
pub fn allreduce_cost(model: &AllReduceModel, size_bytes: f64) -> f64 {
    model.cost(size_bytes)
}

/// Point-to-point network parameters of an `alpha + beta * M` link model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Point-to-point latency, seconds.
    pub alpha: f64,
    /// Transmission time per byte, seconds/byte.
    pub beta: f64,
    /// Reduction (summation) time per byte, seconds/byte.
    pub gamma: f64,
    pub n_workers: u32,
}

impl NetworkParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, n_workers: u32) -> Result<Self> {
        let net = Self {
            alpha,
            beta,
            gamma,
            n_workers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidNetwork(format!(
                "alpha must be > 0, got {:e}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidNetwork(format!(
                "beta must be >= 0, got {:e}",
                self.beta
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidNetwork(format!(
                "gamma must be >= 0, got {:e}",
                self.gamma
            )));
        }
        if self.n_workers < 2 {
            return Err(Error::InvalidNetwork(format!(
                "n_workers must be >= 2, got {}",
                self.n_workers
            )));
        }
        Ok(())
    }

    /// Same link parameters with a different worker count.
    pub fn with_workers(&self, n_workers: u32) -> Self {
        Self { n_workers, ..*self }
    }

    /// Back-solves ring link parameters from a fitted `(a, b)` measured on
    /// `n_workers` workers, attributing all per-byte time to transmission
    /// (`gamma = 0`).
    pub fn from_ring_fit(model: &AllReduceModel, n_workers: u32) -> Result<Self> {
        if n_workers < 2 {
            return Err(Error::InvalidNetwork(format!(
                "n_workers must be >= 2, got {n_workers}"
            )));
        }
        let n = f64::from(n_workers);
        let alpha = model.startup / (2.0 * (n - 1.0));
        let beta = model.per_byte * n / (2.0 * (n - 1.0));
        Self::new(alpha, beta, 0.0, n_workers)
    }
}

/// Collective algorithms with closed-form linear costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllReduceAlgorithm {
    BinaryTree,
    RecursiveDoubling,
    RecursiveHalvingDoubling,
    DoubleBinaryTrees,
    Ring,
}

impl AllReduceAlgorithm {
    pub const ALL: [AllReduceAlgorithm; 5] = [
        Self::BinaryTree,
        Self::RecursiveDoubling,
        Self::RecursiveHalvingDoubling,
        Self::DoubleBinaryTrees,
        Self::Ring,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BinaryTree => "binary-tree",
            Self::RecursiveDoubling => "recursive-doubling",
            Self::RecursiveHalvingDoubling => "recursive-halving-doubling",
            Self::DoubleBinaryTrees => "double-binary-trees",
            Self::Ring => "ring",
        }
    }

    fn assumes_power_of_two(self) -> bool {
        !matches!(self, Self::Ring)
    }
}

impl fmt::Display for AllReduceAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AllReduceAlgorithm {
    type Err = String;

    fn from_str(raw: &str) -> std::result::Result<Self, Self::Err> {
        let compact: String = raw
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect();
        match compact.as_str() {
            "binarytree" | "tree" => Ok(Self::BinaryTree),
            "recursivedoubling" => Ok(Self::RecursiveDoubling),
            "recursivehalvingdoubling" | "rabenseifner" => Ok(Self::RecursiveHalvingDoubling),
            "doublebinarytrees" | "doublebinarytree" | "dbt" => Ok(Self::DoubleBinaryTrees),
            "ring" => Ok(Self::Ring),
            _ => Err(format!("unknown all-reduce algorithm: {raw}")),
        }
    }
}

/// How the startup term of double binary trees is evaluated.
///
/// The published cost table lists the startup as `2 log N` with no latency
/// factor, which is dimensionally a count, not a time. `AlphaCorrected`
/// multiplies by `alpha`; `Literal` evaluates the table as printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeStartup {
    #[default]
    AlphaCorrected,
    Literal,
}

/// A model derived from closed-form coefficients, with any caveats that
/// applied while deriving it.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedModel {
    pub model: AllReduceModel,
    pub warnings: Vec<String>,
}

/// Evaluates the closed-form `(a, b)` of `algo` on `net`.
///
/// Logarithms are base 2 and evaluated as reals, so non power-of-two worker
/// counts produce a model plus a warning rather than an error.
pub fn coefficients_for(
    algo: AllReduceAlgorithm,
    net: &NetworkParams,
    tree_startup: TreeStartup,
) -> Result<DerivedModel> {
    net.validate()?;
    let NetworkParams {
        alpha,
        beta,
        gamma,
        n_workers,
    } = *net;
    let n = f64::from(n_workers);
    let log_n = n.log2();
    let mut warnings = Vec::new();

    if algo.assumes_power_of_two() && !n_workers.is_power_of_two() {
        warnings.push(format!(
            "{algo}: {n_workers} workers is not a power of two; log2(N) = {log_n:.6} used as a real"
        ));
    }

    let (startup, per_byte) = match algo {
        AllReduceAlgorithm::BinaryTree => (2.0 * alpha * log_n, (2.0 * beta + gamma) * log_n),
        AllReduceAlgorithm::RecursiveDoubling => (alpha * log_n, (beta + gamma) * log_n),
        AllReduceAlgorithm::RecursiveHalvingDoubling => (
            2.0 * alpha * log_n,
            2.0 * beta - (2.0 * beta + gamma) / n + gamma,
        ),
        AllReduceAlgorithm::DoubleBinaryTrees => {
            let startup = match tree_startup {
                TreeStartup::AlphaCorrected => {
                    warnings.push(
                        "double-binary-trees: startup evaluated as 2*alpha*log2(N) (alpha-corrected)"
                            .to_string(),
                    );
                    2.0 * alpha * log_n
                }
                TreeStartup::Literal => {
                    warnings.push(
                        "double-binary-trees: startup evaluated as 2*log2(N) seconds (literal, no alpha factor)"
                            .to_string(),
                    );
                    2.0 * log_n
                }
            };
            (startup, beta + gamma)
        }
        AllReduceAlgorithm::Ring => (
            2.0 * (n - 1.0) * alpha,
            2.0 * (n - 1.0) / n * beta + (n - 1.0) / n * gamma,
        ),
    };

    Ok(DerivedModel {
        model: AllReduceModel::new(startup, per_byte)?,
        warnings,
    })
}

/// One measured all-reduce: message size and wall time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommMeasurement {
    pub size_bytes: u64,
    pub time_sec: f64,
}

impl CommMeasurement {
    pub fn new(size_bytes: u64, time_sec: f64) -> Result<Self> {
        if !time_sec.is_finite() || time_sec <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "measurement at {size_bytes} bytes has non-positive time {time_sec:e}"
            )));
        }
        Ok(Self {
            size_bytes,
            time_sec,
        })
    }
}

/// Residual weighting used by [`fit_model_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitWeighting {
    /// Minimise squared relative residuals (weights `1 / t^2`).
    #[default]
    Relative,
    /// Ordinary least squares on absolute residuals.
    Unweighted,
}

/// Fits `(a, b)` with relative-residual weighting.
///
/// Measured collective times carry roughly multiplicative noise and the
/// sizes span several decades, so absolute residuals at large messages
/// would swamp the startup term.
pub fn fit_model(measurements: &[CommMeasurement]) -> Result<AllReduceModel> {
    fit_model_with(measurements, FitWeighting::Relative)
}

pub fn fit_model_with(
    measurements: &[CommMeasurement],
    weighting: FitWeighting,
) -> Result<AllReduceModel> {
    if measurements.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 measurements, got {}",
            measurements.len()
        )));
    }
    let first = measurements[0].size_bytes;
    if measurements.iter().all(|m| m.size_bytes == first) {
        return Err(Error::DegenerateFit(
            "need at least 2 distinct message sizes".to_string(),
        ));
    }
    for m in measurements {
        if !m.time_sec.is_finite() || m.time_sec <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "measurement at {} bytes has non-positive time {:e}",
                m.size_bytes, m.time_sec
            )));
        }
    }

    let weight = |m: &CommMeasurement| match weighting {
        FitWeighting::Relative => 1.0 / (m.time_sec * m.time_sec),
        FitWeighting::Unweighted => 1.0,
    };

    // Centered weighted normal equations.
    let total_w: f64 = measurements.iter().map(weight).sum();
    let mean_x = measurements
        .iter()
        .map(|m| weight(m) * m.size_bytes as f64)
        .sum::<f64>()
        / total_w;
    let mean_y = measurements
        .iter()
        .map(|m| weight(m) * m.time_sec)
        .sum::<f64>()
        / total_w;
    let (sxy, sxx) = measurements.iter().fold((0.0, 0.0), |(sxy, sxx), m| {
        let w = weight(m);
        let dx = m.size_bytes as f64 - mean_x;
        (sxy + w * dx * (m.time_sec - mean_y), sxx + w * dx * dx)
    });

    let per_byte = sxy / sxx;
    let startup = mean_y - per_byte * mean_x;

    if startup.is_nan() || startup <= 0.0 {
        return Err(Error::FitRejected {
            coefficient: "a",
            value: startup,
        });
    }
    if per_byte.is_nan() || per_byte < 0.0 {
        return Err(Error::FitRejected {
            coefficient: "b",
            value: per_byte,
        });
    }
    Ok(AllReduceModel { startup, per_byte })
}

#[derive(Debug, Deserialize)]
struct MeasurementRow {
    size_bytes: u64,
    time_us: f64,
}

/// Reads a `size_bytes,time_us` CSV, converting times to seconds.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<CommMeasurement>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "size_bytes" || &headers[1] != "time_us" {
        return Err(Error::DegenerateFit(format!(
            "measurement CSV header must be `size_bytes,time_us`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    csv.deserialize::<MeasurementRow>()
        .map(|row| {
            let row = row?;
            CommMeasurement::new(row.size_bytes, row.time_us * 1e-6)
        })
        .collect()
}

pub fn write_measurements<W: Write>(writer: W, measurements: &[CommMeasurement]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["size_bytes", "time_us"])?;
    for m in measurements {
        csv.write_record([m.size_bytes.to_string(), (m.time_sec * 1e6).to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Where a model file's coefficients came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSource {
    #[serde(rename = "fit")]
    Fit,
    /// Closed-form algorithm coefficients.
    #[serde(rename = "table2")]
    ClosedForm,
}

/// On-disk model description shared by the fit, plan and simulate commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub a_sec: f64,
    pub b_sec_per_byte: f64,
    pub source: ModelSource,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ModelFile {
    pub fn new(model: AllReduceModel, source: ModelSource, warnings: Vec<String>) -> Self {
        Self {
            a_sec: model.startup,
            b_sec_per_byte: model.per_byte,
            source,
            warnings,
        }
    }

    pub fn model(&self) -> Result<AllReduceModel> {
        AllReduceModel::new(self.a_sec, self.b_sec_per_byte)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(actual: f64, expected: f64, rel: f64) -> bool {
        (actual - expected).abs() <= rel * expected.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn ring_zero_bandwidth_is_startup_only() {
        let net = NetworkParams::new(1e-3, 0.0, 0.0, 8).unwrap();
        let d = coefficients_for(AllReduceAlgorithm::Ring, &net, TreeStartup::default()).unwrap();
        assert!(close(d.model.startup, 0.014, 1e-12));
        assert_eq!(d.model.per_byte, 0.0);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn ring_matches_closed_form() {
        let net = NetworkParams::new(2e-5, 1e-9, 5e-10, 32).unwrap();
        let d = coefficients_for(AllReduceAlgorithm::Ring, &net, TreeStartup::default()).unwrap();
        assert!(close(d.model.startup, 2.0 * 31.0 * 2e-5, 1e-12));
        assert!(close(
            d.model.per_byte,
            2.0 * 31.0 / 32.0 * 1e-9 + 31.0 / 32.0 * 5e-10,
            1e-12
        ));
    }

    #[test]
    fn recursive_doubling_hand_evaluated() {
        let net = NetworkParams::new(1e-4, 2e-9, 1e-9, 16).unwrap();
        let d = coefficients_for(
            AllReduceAlgorithm::RecursiveDoubling,
            &net,
            TreeStartup::default(),
        )
        .unwrap();
        assert!(close(d.model.startup, 4e-4, 1e-12));
        assert!(close(d.model.per_byte, 1.2e-8, 1e-12));
    }

    #[test]
    fn remaining_rows_hand_evaluated() {
        let net = NetworkParams::new(1e-4, 2e-9, 1e-9, 8).unwrap();
        let bt = coefficients_for(AllReduceAlgorithm::BinaryTree, &net, TreeStartup::default())
            .unwrap()
            .model;
        assert!(close(bt.startup, 6e-4, 1e-12));
        assert!(close(bt.per_byte, 5e-9 * 3.0, 1e-12));

        let rhd = coefficients_for(
            AllReduceAlgorithm::RecursiveHalvingDoubling,
            &net,
            TreeStartup::default(),
        )
        .unwrap()
        .model;
        assert!(close(rhd.startup, 6e-4, 1e-12));
        assert!(close(rhd.per_byte, 4e-9 - 5e-9 / 8.0 + 1e-9, 1e-12));
    }

    #[test]
    fn double_binary_trees_modes_are_surfaced() {
        let net = NetworkParams::new(1e-4, 2e-9, 1e-9, 16).unwrap();
        let corrected = coefficients_for(
            AllReduceAlgorithm::DoubleBinaryTrees,
            &net,
            TreeStartup::AlphaCorrected,
        )
        .unwrap();
        assert!(close(corrected.model.startup, 8e-4, 1e-12));
        assert!(close(corrected.model.per_byte, 3e-9, 1e-12));
        assert!(corrected.warnings.iter().any(|w| w.contains("alpha-corrected")));

        let literal =
            coefficients_for(AllReduceAlgorithm::DoubleBinaryTrees, &net, TreeStartup::Literal)
                .unwrap();
        assert!(close(literal.model.startup, 8.0, 1e-12));
        assert!(literal.warnings.iter().any(|w| w.contains("literal")));
    }

    #[test]
    fn non_power_of_two_warns_but_evaluates() {
        let net = NetworkParams::new(1e-4, 1e-9, 0.0, 12).unwrap();
        let d = coefficients_for(
            AllReduceAlgorithm::RecursiveDoubling,
            &net,
            TreeStartup::default(),
        )
        .unwrap();
        assert!(close(d.model.startup, 1e-4 * 12f64.log2(), 1e-12));
        assert_eq!(d.warnings.len(), 1);

        let ring = coefficients_for(AllReduceAlgorithm::Ring, &net, TreeStartup::default()).unwrap();
        assert!(ring.warnings.is_empty());
    }

    #[test]
    fn network_validation() {
        assert!(NetworkParams::new(0.0, 0.0, 0.0, 4).is_err());
        assert!(NetworkParams::new(1e-6, -1.0, 0.0, 4).is_err());
        assert!(NetworkParams::new(1e-6, 0.0, -1.0, 4).is_err());
        assert!(NetworkParams::new(1e-6, 0.0, 0.0, 1).is_err());
    }

    #[test]
    fn ring_fit_back_solve_round_trips() {
        let fitted = AllReduceModel::new(9.72e-4, 1.97e-9).unwrap();
        let net = NetworkParams::from_ring_fit(&fitted, 16).unwrap();
        let back = coefficients_for(AllReduceAlgorithm::Ring, &net, TreeStartup::default())
            .unwrap()
            .model;
        assert!(close(back.startup, fitted.startup, 1e-12));
        assert!(close(back.per_byte, fitted.per_byte, 1e-12));
    }

    #[test]
    fn cost_examples() {
        let cluster1 = AllReduceModel::new(9.72e-4, 1.97e-9).unwrap();
        assert!(close(cluster1.cost(204800.0), 1.375456e-3, 1e-12));
        assert!(close(cluster1.cost(409600.0), 1.778912e-3, 1e-12));
        assert_eq!(AllReduceModel::new(0.5, 0.0).unwrap().cost(0.0), 0.5);
        let cluster3 = AllReduceModel::new(2.36e-4, 4.06e-10).unwrap();
        assert!(close(allreduce_cost(&cluster3, 1e6), 6.42e-4, 1e-12));
    }

    #[test]
    fn model_validation() {
        assert!(AllReduceModel::new(0.0, 1e-9).is_err());
        assert!(AllReduceModel::new(1e-3, -1e-9).is_err());
        assert!(AllReduceModel::new(f64::NAN, 0.0).is_err());
        assert!(AllReduceModel::new(1e-3, 0.0).is_ok());
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let truth = AllReduceModel::new(1e-3, 2e-9).unwrap();
        let data: Vec<_> = [1_000u64, 1_000_000, 10_000_000]
            .iter()
            .map(|&s| CommMeasurement::new(s, truth.cost(s as f64)).unwrap())
            .collect();
        for weighting in [FitWeighting::Relative, FitWeighting::Unweighted] {
            let fit = fit_model_with(&data, weighting).unwrap();
            assert!((fit.startup - 1e-3).abs() <= 1e-12);
            assert!((fit.per_byte - 2e-9).abs() <= 1e-12);
        }
    }

    #[test]
    fn degenerate_fits() {
        let one = [CommMeasurement::new(100, 1e-3).unwrap()];
        assert!(matches!(fit_model(&one), Err(Error::DegenerateFit(_))));
        let same = [
            CommMeasurement::new(100, 1e-3).unwrap(),
            CommMeasurement::new(100, 2e-3).unwrap(),
        ];
        assert!(matches!(fit_model(&same), Err(Error::DegenerateFit(_))));
        assert!(CommMeasurement::new(10, 0.0).is_err());
    }

    #[test]
    fn fit_rejects_non_positive_startup_and_negative_slope() {
        // Line through the origin with negative intercept.
        let neg_a = [
            CommMeasurement::new(1_000, 1e-6).unwrap(),
            CommMeasurement::new(2_000, 3e-6).unwrap(),
        ];
        match fit_model(&neg_a) {
            Err(Error::FitRejected { coefficient, .. }) => assert_eq!(coefficient, "a"),
            other => panic!("expected rejection of a, got {other:?}"),
        }
        let neg_b = [
            CommMeasurement::new(1_000, 2e-3).unwrap(),
            CommMeasurement::new(2_000, 1e-3).unwrap(),
        ];
        match fit_model(&neg_b) {
            Err(Error::FitRejected { coefficient, .. }) => assert_eq!(coefficient, "b"),
            other => panic!("expected rejection of b, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let text = "size_bytes,time_us\n1000,1000.5\n2000000,2500\n";
        let rows = read_measurements(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(close(rows[0].time_sec, 1.0005e-3, 1e-12));

        let mut out = Vec::new();
        write_measurements(&mut out, &rows).unwrap();
        let again = read_measurements(out.as_slice()).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(again[1].size_bytes, 2_000_000);

        assert!(read_measurements("size,time\n1,2\n".as_bytes()).is_err());
        assert!(read_measurements("size_bytes,time_us\nabc,2\n".as_bytes()).is_err());
        assert!(read_measurements("size_bytes,time_us\n10,-2\n".as_bytes()).is_err());
    }

    #[test]
    fn algorithm_names_parse() {
        for algo in AllReduceAlgorithm::ALL {
            assert_eq!(algo.as_str().parse::<AllReduceAlgorithm>().unwrap(), algo);
        }
        assert_eq!(
            "DOUBLE_BINARY_TREES".parse::<AllReduceAlgorithm>().unwrap(),
            AllReduceAlgorithm::DoubleBinaryTrees
        );
        assert!("butterfly".parse::<AllReduceAlgorithm>().is_err());
    }

    #[test]
    fn model_file_json_shape() {
        let file = ModelFile::new(
            AllReduceModel::new(1e-3, 2e-9).unwrap(),
            ModelSource::ClosedForm,
            vec!["note".into()],
        );
        let mut buf = Vec::new();
        file.write(&mut buf).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(value["source"], "table2");
        assert_eq!(value["a_sec"], 1e-3);
        assert_eq!(ModelFile::read(buf.as_slice()).unwrap(), file);
    }
}
