use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flashbias::decomposition::fbf::write_fbf;
use flashbias::decomposition::{
    decompose_alibi, decompose_spatial, generate_bias, neural_decompose, reconstruction_report,
    svd_decompose, DecompositionReport, FactoredBias, NeuralConfig, RankTarget,
};
use flashbias::tensor::io::read_dbm;
use flashbias::{Dtype, Matrix, Scalar};
use serde::Serialize;

use crate::args::{Common, DecomposeArgs, Method};
use crate::genspec::{GenSpec, Generated};
use crate::report::Report;
use crate::{CliError, CliResult, Outcome};

#[derive(Clone, Debug, Serialize)]
pub struct DecomposeRow {
    pub source: String,
    pub method: Method,
    pub dtype: Dtype,
    pub n: usize,
    pub m: usize,
    #[serde(flatten)]
    pub report: DecompositionReport,
    pub factors_path: Option<PathBuf>,
    pub loss_trace_path: Option<PathBuf>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Serialize)]
struct DecomposeConfig<'a> {
    #[serde(flatten)]
    common: &'a Common,
    #[serde(flatten)]
    args: &'a DecomposeArgs,
}

pub fn run(common: &Common, args: &DecomposeArgs) -> CliResult<Outcome> {
    let row = match common.dtype {
        Dtype::F64 => decompose::<f64>(common, args)?,
        Dtype::F32 => decompose::<f32>(common, args)?,
    };
    let mut report = Report::new(&DecomposeConfig { common, args })?;
    report.push(&row)?;
    Ok(Outcome {
        report,
        passed: true,
    })
}

struct Target<T> {
    source: String,
    spec: Option<GenSpec>,
    generated: Option<Generated<T>>,
    matrix: Matrix<T>,
}

fn load<T: Scalar>(common: &Common, args: &DecomposeArgs) -> CliResult<Target<T>> {
    if let Some(text) = &args.generator {
        let spec = GenSpec::parse(text)?;
        let generated = spec.build::<T>(common.seed);
        let matrix = generate_bias(&generated.generator)?;
        return Ok(Target {
            source: spec.to_string(),
            spec: Some(spec),
            generated: Some(generated),
            matrix,
        });
    }
    let path = args
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("one of --gen or --in is required".into()))?;
    let any = read_dbm(BufReader::new(File::open(path)?))?;
    Ok(Target {
        source: path.display().to_string(),
        spec: None,
        generated: None,
        matrix: any.into_f64().cast(),
    })
}

fn decompose<T: Scalar>(common: &Common, args: &DecomposeArgs) -> CliResult<DecomposeRow> {
    let target = load::<T>(common, args)?;
    if args.energy.is_some() && args.method != Method::Svd {
        return Err(CliError::Usage(
            "--energy applies to --method svd only".into(),
        ));
    }

    let mut trace = None;
    let (fb, report) = match args.method {
        Method::Exact => {
            let fb: FactoredBias<T> = match (&target.spec, &target.generated) {
                (Some(GenSpec::Alibi { n, m, slope }), _) => {
                    decompose_alibi(*n, *m, T::narrow(*slope))
                }
                (Some(GenSpec::Spatial { .. }), Some(g)) => {
                    let (pq, pk) = g.coords.as_ref().expect("spatial specs carry points");
                    decompose_spatial(pq, pk, None)?
                }
                _ => {
                    return Err(CliError::Usage(
                        "--method exact needs an alibi or spatial generator".into(),
                    ))
                }
            };
            let report = reconstruction_report(&fb, &target.matrix)?;
            (fb, report)
        }
        Method::Svd => {
            let goal = match (args.rank, args.energy) {
                (Some(r), _) => RankTarget::Rank(r),
                (None, Some(e)) => RankTarget::Energy(e),
                (None, None) => {
                    return Err(CliError::Usage(
                        "--method svd needs --rank or --energy".into(),
                    ))
                }
            };
            svd_decompose(&target.matrix, goal)?
        }
        Method::Neural => {
            let Some((xq, xk)) = target.generated.as_ref().and_then(|g| g.coords.as_ref()) else {
                return Err(CliError::Usage(
                    "--method neural needs a generator with coordinates (alibi, spatial, gravity, spherical)"
                        .into(),
                ));
            };
            let cfg = NeuralConfig {
                rank: args.rank.unwrap_or(32),
                hidden: args.hidden,
                iters: args.iters,
                lr: args.lr,
                seed: common.seed,
                ..NeuralConfig::default()
            };
            let fit = neural_decompose(xq, xk, &target.matrix, &cfg)?;
            let report = reconstruction_report(&fit.factors, &target.matrix)?;
            trace = Some((fit.loss_trace, fit.final_loss));
            (fit.factors, report)
        }
    };

    if let Some(path) = &common.out {
        let mut w = BufWriter::new(File::create(path)?);
        write_fbf(&mut w, &fb)?;
        w.flush()?;
    }
    let trace_path = match (&trace, &args.loss_trace, &common.out) {
        (None, _, _) => None,
        (Some(_), Some(p), _) => Some(p.clone()),
        (Some(_), None, Some(out)) => Some(with_suffix(out, ".loss.csv")),
        (Some(_), None, None) => None,
    };
    if let (Some((losses, _)), Some(path)) = (&trace, &trace_path) {
        write_trace(path, losses)?;
    }

    Ok(DecomposeRow {
        source: target.source,
        method: args.method,
        dtype: T::DTYPE,
        n: fb.n(),
        m: fb.m(),
        report,
        factors_path: common.out.clone(),
        loss_trace_path: trace_path,
        initial_loss: trace.as_ref().and_then(|(l, _)| l.first().copied()),
        final_loss: trace.as_ref().map(|(_, f)| *f),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_trace(path: &Path, losses: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
