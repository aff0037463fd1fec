//! Accuracy benchmark harness: the fixed-kernel baseline, ConvRFM,
//! Deep ConvRFM, and the mini CNN compared on labeled image tasks.

use crate::cnn::{train, ConvLayerSpec, MiniCnn, TrainConfig};
use crate::data::LabeledSet;
use crate::deep::{run_deep_convrfm, DeepConfig};
use crate::error::{Error, Result};
use crate::rfm::{accuracy, run_convrfm, RfmConfig};
use crate::scalar::Scalar;

/// A method entering the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Round-1 kernel model (feature matrix fixed at identity).
    FixedKernel,
    ConvRfm,
    DeepConvRfm,
    Cnn,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::FixedKernel,
        Method::ConvRfm,
        Method::DeepConvRfm,
        Method::Cnn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::FixedKernel => "fixed-kernel",
            Method::ConvRfm => "convrfm",
            Method::DeepConvRfm => "deep-convrfm",
            Method::Cnn => "cnn",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method {name:?}; expected one of fixed-kernel, convrfm, \
                     deep-convrfm, cnn"
                ))
            })
    }
}

/// Mini-CNN settings for one benchmark task.
#[derive(Debug, Clone)]
pub struct CnnTaskSpec<T> {
    pub layers: Vec<ConvLayerSpec>,
    pub train: TrainConfig<T>,
}

/// One dataset plus the per-method settings used on it.
#[derive(Debug, Clone)]
pub struct BenchmarkTask<T> {
    pub name: String,
    pub train: LabeledSet<T>,
    pub test: LabeledSet<T>,
    pub rfm: RfmConfig<T>,
    /// Required when the sweep includes [`Method::DeepConvRfm`].
    pub deep: Option<DeepConfig<T>>,
    /// Required when the sweep includes [`Method::Cnn`].
    pub cnn: Option<CnnTaskSpec<T>>,
}

/// One (method, task) result.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: &'static str,
    pub task: String,
    pub sigma: f64,
    pub accuracy: f64,
}

/// Renders rows as the benchmark CSV: `method,task,sigma,accuracy`.
pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("method,task,sigma,accuracy\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.method, row.task, row.sigma, row.accuracy
        ));
    }
    out
}

/// Runs every requested method on every task and reports test accuracy.
/// Row order is tasks outer, methods inner, exactly as given.
pub fn run_benchmark<T: Scalar>(
    tasks: &[BenchmarkTask<T>],
    methods: &[Method],
) -> Result<Vec<BenchmarkRow>> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("benchmark tasks"));
    }
    if methods.is_empty() {
        return Err(Error::EmptyInput("benchmark methods"));
    }
    let mut rows = Vec::with_capacity(tasks.len() * methods.len());
    for task in tasks {
        if task.train.classes != task.test.classes {
            return Err(Error::DimensionMismatch {
                context: "train vs test class count",
                expected: task.train.classes,
                got: task.test.classes,
            });
        }
        let kernel_outcome = if methods
            .iter()
            .any(|m| matches!(m, Method::FixedKernel | Method::ConvRfm))
        {
            Some(run_convrfm(
                &task.train.images,
                &task.train.labels,
                task.train.classes,
                &task.rfm,
            )?)
        } else {
            None
        };
        for method in methods {
            let acc = match method {
                Method::FixedKernel => {
                    let outcome = kernel_outcome.as_ref().expect("run above");
                    let scores = outcome.first_model.predict_batch(&task.test.images)?;
                    accuracy(&scores.view(), &task.test.labels)
                }
                Method::ConvRfm => {
                    let outcome = kernel_outcome.as_ref().expect("run above");
                    let scores = outcome.model.predict_batch(&task.test.images)?;
                    accuracy(&scores.view(), &task.test.labels)
                }
                Method::DeepConvRfm => {
                    let config = task.deep.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "task {} has no deep-convrfm settings",
                            task.name
                        ))
                    })?;
                    let outcome = run_deep_convrfm(
                        &task.train.images,
                        &task.train.labels,
                        task.train.classes,
                        config,
                    )?;
                    let scores = outcome.predict_batch(&task.test.images)?;
                    accuracy(&scores.view(), &task.test.labels)
                }
                Method::Cnn => {
                    let spec = task.cnn.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "task {} has no cnn settings",
                            task.name
                        ))
                    })?;
                    let input_shape = task
                        .train
                        .images
                        .first()
                        .ok_or(Error::EmptyInput("benchmark training set"))?
                        .shape();
                    let outputs = if task.train.classes == 2 {
                        1
                    } else {
                        task.train.classes
                    };
                    let mut net =
                        MiniCnn::new(input_shape, &spec.layers, outputs, spec.train.seed)?;
                    train(
                        &mut net,
                        &task.train.images,
                        &task.train.labels,
                        task.train.classes,
                        None,
                        &spec.train,
                    )?;
                    let scores = net.predict_batch(&task.test.images)?;
                    accuracy(&scores.view(), &task.test.labels)
                }
            };
            rows.push(BenchmarkRow {
                method: method.name(),
                task: task.name.clone(),
                sigma: task.train.noise_sigma,
                accuracy: acc,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::Optimizer;
    use crate::data::gen_bars;
    use crate::kernel::KernelSpec;
    use crate::tensor::PatchSpec;

    fn tiny_task(sigma: f64, seed: u64) -> BenchmarkTask<f64> {
        let train = gen_bars::<f64>(40, 6, 3, sigma, seed).unwrap();
        let test = gen_bars::<f64>(20, 6, 3, sigma, seed + 1).unwrap();
        let kernel = KernelSpec::relu_cnngp(2, PatchSpec::new(3, 1, 0).unwrap()).unwrap();
        let mut rfm = RfmConfig::new(kernel);
        rfm.iters = 2;
        rfm.seed = 7;
        let mut deep = DeepConfig::new(2, rfm.clone());
        deep.filters = 4;
        let mut train_cfg = TrainConfig::adam(3);
        train_cfg.epochs = 2;
        train_cfg.batch_size = 8;
        train_cfg.optimizer = Optimizer::Adam;
        let cnn = CnnTaskSpec {
            layers: vec![ConvLayerSpec::new(4, 3)],
            train: train_cfg,
        };
        BenchmarkTask {
            name: "bars".into(),
            train,
            test,
            rfm,
            deep: Some(deep),
            cnn: Some(cnn),
        }
    }

    #[test]
    fn sweep_emits_one_row_per_method_and_sigma_with_sane_accuracies() {
        let tasks = vec![tiny_task(0.1, 1), tiny_task(0.3, 2)];
        let rows = run_benchmark(&tasks, &Method::ALL).unwrap();
        assert_eq!(rows.len(), 8);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.method, Method::ALL[i % 4].name());
            assert!((0.0..=1.0).contains(&row.accuracy), "{row:?}");
            assert_eq!(row.sigma, if i < 4 { 0.1 } else { 0.3 });
        }
        let csv = benchmark_csv(&rows);
        assert!(csv.starts_with("method,task,sigma,accuracy\n"));
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.lines().nth(1).unwrap().starts_with("fixed-kernel,bars,0.1,"));
    }

    #[test]
    fn sweeps_are_deterministic() {
        let tasks = vec![tiny_task(0.2, 4)];
        let a = run_benchmark(&tasks, &Method::ALL).unwrap();
        let b = run_benchmark(&tasks, &Method::ALL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_per_method_settings_are_reported() {
        let mut task = tiny_task(0.1, 5);
        task.deep = None;
        let err = run_benchmark(&[task], &[Method::DeepConvRfm]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let mut task = tiny_task(0.1, 6);
        task.cnn = None;
        assert!(run_benchmark(&[task], &[Method::Cnn]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }
}
