//! Model traces: per-layer parameter counts and backward times.
//!
//! Layers are stored in forward order (index 0 is the first layer). The
//! backward pass, and therefore communication, runs from the last index
//! down to 0. Trace files carry times in microseconds; everything in memory
//! is seconds.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerProfile {
    pub name: String,
    pub params: u64,
    /// Backward computation time, seconds.
    pub backward_time: f64,
}

impl LayerProfile {
    pub fn new(name: impl Into<String>, params: u64, backward_time: f64) -> Self {
        Self {
            name: name.into(),
            params,
            backward_time,
        }
    }
}

/// A validated, immutable model trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTrace {
    layers: Vec<LayerProfile>,
    forward_time: f64,
    bytes_per_element: u32,
}

impl ModelTrace {
    pub fn new(layers: Vec<LayerProfile>, forward_time: f64, bytes_per_element: u32) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::TraceInvalid("trace must have at least one layer".into()));
        }
        if !forward_time.is_finite() || forward_time < 0.0 {
            return Err(Error::TraceInvalid(format!(
                "forward_time must be finite and >= 0, got {forward_time:e}"
            )));
        }
        if bytes_per_element != 2 && bytes_per_element != 4 {
            return Err(Error::TraceInvalid(format!(
                "bytes_per_element must be 2 or 4, got {bytes_per_element}"
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if !layer.backward_time.is_finite() || layer.backward_time < 0.0 {
                return Err(Error::TraceInvalid(format!(
                    "layer {} ({}): backward_time must be finite and >= 0, got {:e}",
                    i + 1,
                    layer.name,
                    layer.backward_time
                )));
            }
        }
        if layers.iter().all(|l| l.params == 0) {
            return Err(Error::TraceInvalid(
                "at least one layer must have params > 0".into(),
            ));
        }
        Ok(Self {
            layers,
            forward_time,
            bytes_per_element,
        })
    }

    pub fn layers(&self) -> &[LayerProfile] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn forward_time(&self) -> f64 {
        self.forward_time
    }

    pub fn bytes_per_element(&self) -> u32 {
        self.bytes_per_element
    }

    pub fn backward_times(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.backward_time).collect()
    }

    pub fn total_backward_time(&self) -> f64 {
        self.layers.iter().map(|l| l.backward_time).sum()
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    /// Gradient bytes of layer `index` (0-based).
    pub fn layer_bytes(&self, index: usize) -> Result<f64> {
        self.layers
            .get(index)
            .map(|l| self.bytes_of(l.params))
            .ok_or(Error::LayerOutOfRange {
                index,
                layers: self.layers.len(),
            })
    }

    /// Gradient bytes of every layer, forward order.
    pub fn all_layer_bytes(&self) -> Vec<f64> {
        self.layers.iter().map(|l| self.bytes_of(l.params)).collect()
    }

    pub fn total_bytes(&self) -> f64 {
        self.bytes_of(self.total_params())
    }

    fn bytes_of(&self, params: u64) -> f64 {
        (params * u64::from(self.bytes_per_element)) as f64
    }
}

/// Free function form of [`ModelTrace::layer_bytes`].
pub fn layer_bytes(trace: &ModelTrace, index: usize) -> Result<f64> {
    trace.layer_bytes(index)
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTrace {
    forward_time_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes_per_element: Option<u32>,
    layers: Vec<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: String,
    params: u64,
    backward_time_us: f64,
}

/// A trace together with non-fatal notes produced while loading it.
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub trace: ModelTrace,
    pub warnings: Vec<String>,
}

pub fn load_trace<R: Read>(reader: R) -> Result<LoadedTrace> {
    let raw: RawTrace =
        serde_json::from_reader(reader).map_err(|e| Error::TraceParse(e.to_string()))?;
    let mut warnings = Vec::new();
    let bytes_per_element = raw.bytes_per_element.unwrap_or_else(|| {
        warnings.push("bytes_per_element missing; defaulting to 4 (single precision)".to_string());
        4
    });

    let layers = raw
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            let layer: RawLayer = serde_json::from_value(value)
                .map_err(|e| Error::TraceParse(format!("layers[{i}] (layer {}): {e}", i + 1)))?;
            Ok(LayerProfile {
                name: layer.name,
                params: layer.params,
                backward_time: us_to_sec(layer.backward_time_us),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let trace = ModelTrace::new(layers, us_to_sec(raw.forward_time_us), bytes_per_element)?;
    Ok(LoadedTrace { trace, warnings })
}

pub fn load_trace_file(path: impl AsRef<std::path::Path>) -> Result<LoadedTrace> {
    load_trace(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Writes the canonical form of a trace.
///
/// Microsecond values are rounded to picoseconds, so a canonical file
/// survives load/save byte for byte.
pub fn save_trace<W: Write>(trace: &ModelTrace, mut writer: W) -> Result<()> {
    let layers = trace
        .layers
        .iter()
        .map(|l| {
            serde_json::to_value(RawLayer {
                name: l.name.clone(),
                params: l.params,
                backward_time_us: sec_to_us(l.backward_time),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let raw = RawTrace {
        forward_time_us: sec_to_us(trace.forward_time),
        bytes_per_element: Some(trace.bytes_per_element),
        layers,
    };
    serde_json::to_writer_pretty(&mut writer, &raw)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub(crate) fn us_to_sec(us: f64) -> f64 {
    us / 1e6
}

pub(crate) fn sec_to_us(sec: f64) -> f64 {
    (sec * 1e12).round() / 1e6
}

/// Parameters for a synthetic, deterministic trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub layers: usize,
    pub total_params: u64,
    /// Seconds.
    pub total_backward_time: f64,
    /// Seconds.
    pub forward_time: f64,
    /// Fraction in `[0, 1)` of layers that are small auxiliary tensors
    /// (biases, normalisation scales). Higher means more skewed sizes.
    pub skew: f64,
    pub bytes_per_element: u32,
    pub seed: u64,
}

/// Generates a trace whose sizes mimic convolutional networks: weight
/// tensors grow with depth, interleaved with many tiny tensors.
///
/// Totals are conserved exactly for parameters and up to rounding for
/// backward time.
pub fn synth_trace(spec: &SynthSpec) -> Result<ModelTrace> {
    if spec.layers == 0 {
        return Err(Error::TraceInvalid("synthetic trace needs layers > 0".into()));
    }
    if spec.total_params == 0 {
        return Err(Error::TraceInvalid("synthetic trace needs total_params > 0".into()));
    }
    if !spec.total_backward_time.is_finite() || spec.total_backward_time <= 0.0 {
        return Err(Error::TraceInvalid(
            "synthetic trace needs total_backward_time > 0".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.skew) {
        return Err(Error::TraceInvalid(format!(
            "skew must lie in [0, 1), got {}",
            spec.skew
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size_noise = LogNormal::new(0.0, 0.6).expect("valid lognormal");
    let time_noise = LogNormal::new(0.0, 0.4).expect("valid lognormal");
    let n = spec.layers;

    let mut size_w = Vec::with_capacity(n);
    let mut time_w = Vec::with_capacity(n);
    let mut small = Vec::with_capacity(n);
    for i in 0..n {
        let depth = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        // Channel width grows ~64x over the depth of the network; weights
        // scale with width squared, auxiliary tensors with width.
        let width = (depth * 64f64.ln()).exp();
        let is_small = n > 1 && rng.random::<f64>() < spec.skew;
        let (s, t) = if is_small {
            (width * 0.001 * size_noise.sample(&mut rng), 0.05 * time_noise.sample(&mut rng))
        } else {
            (width * width * size_noise.sample(&mut rng), time_noise.sample(&mut rng))
        };
        size_w.push(s);
        time_w.push(t);
        small.push(is_small);
    }

    let params = apportion(spec.total_params, &size_w);
    let time_total: f64 = time_w.iter().sum();
    let layers = (0..n)
        .map(|i| {
            let kind = if small[i] { "aux" } else { "weight" };
            LayerProfile {
                name: format!("{kind}{}", i + 1),
                params: params[i],
                backward_time: spec.total_backward_time * time_w[i] / time_total,
            }
        })
        .collect();
    ModelTrace::new(layers, spec.forward_time, spec.bytes_per_element)
}

/// Splits `total` into integers proportional to `weights` (largest
/// remainder), summing exactly to `total`.
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = exact[i] - exact[i].floor();
        let fj = exact[j] - exact[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    if assigned <= total {
        let mut left = total - assigned;
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            out[i] += 1;
            left -= 1;
        }
    } else {
        let mut extra = assigned - total;
        for &i in order.iter().rev().cycle() {
            if extra == 0 {
                break;
            }
            if out[i] > 0 {
                out[i] -= 1;
                extra -= 1;
            }
        }
    }
    out
}

/// The synthetic 161-tensor, ~25.5M parameter trace used by the scaling
/// studies, sized like ResNet-50.
///
/// The backward pass is 0.125 s so that, under the cluster-1 ring fit,
/// ring startup at 2048 workers exceeds the whole overlap window while the
/// double-binary-trees startup of 160 extra all-reduces still fits in it.
pub fn resnet50_like() -> ModelTrace {
    synth_trace(&RESNET50_LIKE).expect("bundled parameters are valid")
}

pub const RESNET50_LIKE: SynthSpec = SynthSpec {
    layers: 161,
    total_params: 25_557_032,
    total_backward_time: 0.125,
    forward_time: 0.0625,
    skew: 0.65,
    bytes_per_element: 4,
    seed: 50,
};

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = r#"{
        "forward_time_us": 1000,
        "bytes_per_element": 4,
        "layers": [
            {"name": "conv1", "params": 100, "backward_time_us": 10},
            {"name": "conv2", "params": 0, "backward_time_us": 20.5},
            {"name": "fc", "params": 3000, "backward_time_us": 30}
        ]
    }"#;

    #[test]
    fn loads_three_layers() {
        let loaded = load_trace(THREE.as_bytes()).unwrap();
        assert!(loaded.warnings.is_empty());
        let t = loaded.trace;
        assert_eq!(t.len(), 3);
        assert_eq!(t.forward_time(), 1e-3);
        assert_eq!(t.layers()[1].backward_time, 20.5e-6);
        assert_eq!(t.layers()[2].name, "fc");
    }

    #[test]
    fn negative_backward_time_is_rejected() {
        let text = THREE.replace("20.5", "-1");
        assert!(matches!(
            load_trace(text.as_bytes()),
            Err(Error::TraceInvalid(_))
        ));
    }

    #[test]
    fn missing_element_size_defaults_with_warning() {
        let text = THREE.replace("\"bytes_per_element\": 4,", "");
        let loaded = load_trace(text.as_bytes()).unwrap();
        assert_eq!(loaded.trace.bytes_per_element(), 4);
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn parse_errors_name_the_layer() {
        let text = THREE.replace("\"params\": 0,", "");
        match load_trace(text.as_bytes()) {
            Err(Error::TraceParse(msg)) => {
                assert!(msg.contains("layers[1]"), "{msg}");
                assert!(msg.contains("params"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = THREE.replace("\"params\": 100", "\"params\": -5");
        assert!(matches!(
            load_trace(text.as_bytes()),
            Err(Error::TraceParse(_))
        ));
    }

    #[test]
    fn invariant_gates() {
        assert!(ModelTrace::new(vec![], 0.0, 4).is_err());
        assert!(ModelTrace::new(vec![LayerProfile::new("x", 0, 1.0)], 0.0, 4).is_err());
        assert!(ModelTrace::new(vec![LayerProfile::new("x", 1, 1.0)], 0.0, 8).is_err());
        assert!(ModelTrace::new(vec![LayerProfile::new("x", 1, 1.0)], -1.0, 4).is_err());
        let bad_bpe = THREE.replace("\"bytes_per_element\": 4", "\"bytes_per_element\": 3");
        assert!(load_trace(bad_bpe.as_bytes()).is_err());
    }

    #[test]
    fn layer_bytes_examples() {
        let resnet = ModelTrace::new(vec![LayerProfile::new("all", 25_500_000, 0.1)], 0.0, 4).unwrap();
        assert_eq!(resnet.layer_bytes(0).unwrap(), 1.02e8);

        let t = load_trace(THREE.as_bytes()).unwrap().trace;
        assert_eq!(layer_bytes(&t, 1).unwrap(), 0.0);
        assert!(matches!(
            t.layer_bytes(3),
            Err(Error::LayerOutOfRange { index: 3, layers: 3 })
        ));

        let half = ModelTrace::new(vec![LayerProfile::new("h", 1000, 0.1)], 0.0, 2).unwrap();
        assert_eq!(half.layer_bytes(0).unwrap(), 2000.0);
    }

    #[test]
    fn canonical_save_is_a_fixed_point() {
        let t = load_trace(THREE.as_bytes()).unwrap().trace;
        let mut first = Vec::new();
        save_trace(&t, &mut first).unwrap();
        let reloaded = load_trace(first.as_slice()).unwrap().trace;
        let mut second = Vec::new();
        save_trace(&reloaded, &mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(reloaded, t);
    }

    #[test]
    fn synth_single_layer_holds_everything() {
        let spec = SynthSpec {
            layers: 1,
            total_params: 12345,
            total_backward_time: 0.25,
            forward_time: 0.1,
            skew: 0.5,
            bytes_per_element: 4,
            seed: 7,
        };
        let t = synth_trace(&spec).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.layers()[0].params, 12345);
        assert!((t.layers()[0].backward_time - 0.25).abs() < 1e-15);
    }

    #[test]
    fn synth_is_deterministic_and_conserves_totals() {
        let a = resnet50_like();
        let b = resnet50_like();
        assert_eq!(a, b);
        assert_eq!(a.len(), 161);
        assert_eq!(a.total_params(), RESNET50_LIKE.total_params);
        assert!((a.total_backward_time() - RESNET50_LIKE.total_backward_time).abs() < 1e-12);

        let other = synth_trace(&SynthSpec {
            seed: 51,
            ..RESNET50_LIKE
        })
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn synth_sizes_are_skewed() {
        let t = resnet50_like();
        let mut sizes: Vec<u64> = t.layers().iter().map(|l| l.params).collect();
        sizes.sort_unstable();
        let median = sizes[sizes.len() / 2];
        let mean = t.total_params() / t.len() as u64;
        assert!(median * 10 < mean, "median {median} mean {mean}");
    }

    #[test]
    fn synth_rejects_bad_specs() {
        let base = RESNET50_LIKE;
        assert!(synth_trace(&SynthSpec { layers: 0, ..base.clone() }).is_err());
        assert!(synth_trace(&SynthSpec { total_params: 0, ..base.clone() }).is_err());
        assert!(synth_trace(&SynthSpec { total_backward_time: 0.0, ..base.clone() }).is_err());
        assert!(synth_trace(&SynthSpec { skew: 1.0, ..base }).is_err());
    }

    #[test]
    fn apportion_sums_exactly() {
        let w = [0.3, 0.3, 0.4, 1e-9];
        for total in [0u64, 1, 7, 1000, 25_557_032] {
            assert_eq!(apportion(total, &w).iter().sum::<u64>(), total);
        }
    }
}
