use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pgvarmion::analysis::{
    comparison_table, error_report, histogram_export, lowest_modes, model_errors, projection_errors, psi_error_report,
    psi_export, slice_export, H1_STEP,
};
use pgvarmion::basis::project;
use pgvarmion::field::FnField;
use pgvarmion::io::{self, Checkpoint};
use pgvarmion::models::{ModelKind, OperatorModel};
use pgvarmion::problem::{Problem, ProblemTag, Split};
use pgvarmion::training::{build_dataset, train_with, training_size_sweep, LabeledDataset};
use pgvarmion::ScalarField;
use serde_json::json;

use crate::config::Settings;
use crate::manifest::Manifest;
use crate::CliError;

/// Solution slices are exported for this many leading test samples (2D only).
const SLICE_SAMPLES: usize = 3;

pub fn problem(s: &Settings) -> Result<Problem, CliError> {
    Ok(match s.resolution {
        Some(r) => Problem::with_resolution(s.problem, r)?,
        None => Problem::new(s.problem)?,
    })
}

fn dataset_name(s: &Settings, problem: &Problem, split: Split, count: usize) -> String {
    // 1D labels do not depend on the resolution setting
    let res = match (problem.tag(), s.resolution) {
        (ProblemTag::Advdiff2d, Some(r)) => format!("-r{r}"),
        _ => String::new(),
    };
    format!("{}{res}-{split}-s{}-n{count}.pgvd", problem.tag(), s.data_seed)
}

/// Loads the dataset file if present (unless `fresh`), else generates and stores it.
fn dataset(s: &Settings, problem: &Problem, split: Split, count: usize, fresh: bool) -> Result<LabeledDataset, CliError> {
    std::fs::create_dir_all(&s.data_dir)?;
    let name = dataset_name(s, problem, split, count);
    let path = s.data_dir.join(&name);
    if !fresh && path.exists() {
        let d = io::load_dataset(&path)?;
        if d.problem != problem.tag() || d.split != split || d.len() != count || d.seed != s.data_seed {
            return Err(CliError::Data(anyhow::anyhow!("{} does not hold the expected dataset", path.display())));
        }
        return Ok(d);
    }
    eprintln!("generating {name}");
    let d = build_dataset(problem, split, count, s.data_seed)?;
    let digest = io::save_dataset(&path, &d)?;
    let details = json!({
        "problem": problem.tag(),
        "split": split,
        "count": count,
        "data_seed": s.data_seed,
        "resolution": problem.resolution(),
        "sensor_rule": d.sensor_rule,
        "output_rule": d.output_rule,
    });
    Manifest::record(&s.data_dir, "gen-data", &[(name, digest)], details)?;
    Ok(d)
}

fn test_sets(s: &Settings, problem: &Problem) -> Result<Vec<LabeledDataset>, CliError> {
    problem.tag().test_splits().iter().map(|&sp| dataset(s, problem, sp, s.test_count, false)).collect()
}

fn out_dir(s: &Settings) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&s.out_dir)?;
    Ok(&s.out_dir)
}

fn checkpoint_path(s: &Settings, kind: ModelKind) -> PathBuf {
    s.out_dir.join(format!("{}-{kind}.ckpt", s.problem))
}

fn load_model(s: &Settings, problem: &Problem, kind: ModelKind) -> Result<OperatorModel, CliError> {
    let path = checkpoint_path(s, kind);
    if !path.exists() {
        return Err(CliError::Data(anyhow::anyhow!(
            "no checkpoint {}; run `pgvarmion train --model {kind}` first",
            path.display()
        )));
    }
    let ck = io::load_checkpoint(&path)?;
    if ck.header.resolution != problem.resolution() {
        return Err(CliError::Data(anyhow::anyhow!(
            "{} was trained at resolution {}, not {}",
            path.display(),
            ck.header.resolution,
            problem.resolution()
        )));
    }
    Ok(ck.restore(problem)?)
}

fn trained_models(s: &Settings, problem: &Problem) -> Result<Vec<OperatorModel>, CliError> {
    ModelKind::ALL
        .into_iter()
        .filter(|&k| checkpoint_path(s, k).exists())
        .map(|k| load_model(s, problem, k))
        .collect()
}

fn write(dir: &Path, name: String, text: &str, written: &mut Vec<(String, String)>) -> Result<(), CliError> {
    let digest = io::save_text(&dir.join(&name), text)?;
    written.push((name, digest));
    Ok(())
}

fn base_details(s: &Settings) -> serde_json::Value {
    json!({
        "problem": s.problem,
        "profile": s.profile,
        "seed": s.seed,
        "data_seed": s.data_seed,
        "train_count": s.train_count,
        "test_count": s.test_count,
        "resolution": s.resolution,
    })
}

pub fn gen_data(s: &Settings, splits: &[Split], count: Option<usize>, csv: bool) -> Result<(), CliError> {
    let p = problem(s)?;
    let splits: Vec<Split> = if splits.is_empty() { p.tag().splits().to_vec() } else { splits.to_vec() };
    for split in splits {
        if !p.tag().splits().contains(&split) {
            return Err(CliError::Config(format!("problem {} has no split {split}", p.tag())));
        }
        let n = count.unwrap_or(if split == Split::Train { s.train_count } else { s.test_count });
        let d = dataset(s, &p, split, n, true)?;
        let name = dataset_name(s, &p, split, n);
        if csv {
            let mut buf = Vec::new();
            io::write_dataset_csv(&mut buf, &d)?;
            let csv_name = name.replace(".pgvd", ".csv");
            let digest = io::save_text(&s.data_dir.join(&csv_name), &String::from_utf8_lossy(&buf))?;
            Manifest::record(&s.data_dir, "gen-data", &[(csv_name, digest)], json!({ "copy_of": name }))?;
        }
        println!("{} {} samples sha256 {}", s.data_dir.join(&name).display(), d.len(), io::dataset_digest(&d)?);
    }
    Ok(())
}

pub fn train(s: &Settings) -> Result<(), CliError> {
    let p = problem(s)?;
    let data = dataset(s, &p, Split::Train, s.train_count, false)?;
    let dir = out_dir(s)?;
    let mut model = OperatorModel::for_problem(&p, s.model, s.seed)?;
    let ckpt = checkpoint_path(s, s.model);
    let history = train_with(&mut model, &data, &s.train, |epoch, m| {
        io::save_checkpoint(&ckpt, &Checkpoint::capture(&p, m, epoch, s.seed, Some(&s.train))).map(|_| ())
    })?;
    let epochs = history.last().map_or(0, |r| r.epoch);
    let ck_digest = io::save_checkpoint(&ckpt, &Checkpoint::capture(&p, &model, epochs, s.seed, Some(&s.train)))?;
    let mut written = vec![(ckpt.file_name().unwrap().to_string_lossy().into_owned(), ck_digest)];
    let mut buf = Vec::new();
    io::write_history_csv(&mut buf, &history)?;
    write(dir, format!("{}-{}-loss.csv", s.problem, s.model), &String::from_utf8_lossy(&buf), &mut written)?;
    let mut details = base_details(s);
    details["model"] = json!(s.model);
    details["num_params"] = json!(model.num_params());
    details["train"] = json!(s.train);
    details["dataset"] = json!(io::dataset_digest(&data)?);
    Manifest::record(dir, "train", &written, details)?;
    println!(
        "{} on {}: {} parameters, {} epochs, loss {:.3e} -> {:.3e}",
        s.model.label(),
        s.problem,
        model.num_params(),
        history.len(),
        history.first().map_or(f64::NAN, |r| r.loss),
        history.last().map_or(f64::NAN, |r| r.loss),
    );
    Ok(())
}

pub fn eval(s: &Settings, kinds: &[ModelKind], projection_only: bool) -> Result<(), CliError> {
    let p = problem(s)?;
    let tests = test_sets(s, &p)?;
    let models = if projection_only {
        Vec::new()
    } else if kinds.is_empty() {
        trained_models(s, &p)?
    } else {
        kinds.iter().map(|&k| load_model(s, &p, k)).collect::<Result<Vec<_>, _>>()?
    };
    let dir = out_dir(s)?;
    let mut written = Vec::new();
    for d in &tests {
        let r = error_report(None, p.basis(), d)?;
        write(dir, format!("{}-projection-{}-errors.csv", s.problem, d.split), &r.to_csv(), &mut written)?;
        for m in &models {
            let r = error_report(Some(m), p.basis(), d)?;
            if r.floor_violations > 0 {
                eprintln!(
                    "note: {} beats the projection on {} of {} {} samples (possible only outside the trial space)",
                    m.kind().label(),
                    r.floor_violations,
                    d.len(),
                    d.split
                );
            }
            write(dir, format!("{}-{}-{}-errors.csv", s.problem, m.kind(), d.split), &r.to_csv(), &mut written)?;
        }
    }
    let refs: Vec<&OperatorModel> = models.iter().collect();
    let table = comparison_table(p.basis(), &refs, &tests)?;
    write(dir, format!("{}-comparison.csv", s.problem), &table.to_csv(), &mut written)?;
    write(dir, format!("{}-comparison.txt", s.problem), &table.to_text(), &mut written)?;
    let mut details = base_details(s);
    details["models"] = json!(models.iter().map(|m| m.kind()).collect::<Vec<_>>());
    Manifest::record(dir, "eval", &written, details)?;
    print!("{}", table.to_text());
    Ok(())
}

pub fn export_psi(s: &Settings, untrained: bool) -> Result<(), CliError> {
    let p = problem(s)?;
    let model = if untrained {
        OperatorModel::for_problem(&p, ModelKind::PgVarmion, s.seed)?
    } else {
        load_model(s, &p, ModelKind::PgVarmion)?
    };
    let pg = model.as_pg().expect("PG-VarMiON checkpoint restores a PG-VarMiON");
    let learned = pg.recover_psi();
    let truth = p.true_psi()?;
    let modes = match p.spatial_dim() {
        1 => lowest_modes(p.basis(), p.basis().len())?,
        _ => lowest_modes(p.basis(), 16)?,
    };
    let dir = out_dir(s)?;
    let mut written = Vec::new();
    let tag = if untrained { "untrained" } else { "pg-varmion" };
    let table = psi_export(&learned, Some(&truth), &modes, p.spatial_dim())?;
    write(dir, format!("{}-{tag}-psi.csv", s.problem), &table, &mut written)?;
    let report = psi_error_report(&learned, &truth, p.analysis(), H1_STEP)?;
    write(dir, format!("{}-{tag}-psi-errors.csv", s.problem), &report.to_csv(), &mut written)?;
    let mut details = base_details(s);
    details["modes"] = json!(modes.iter().map(|k| k + 1).collect::<Vec<_>>());
    Manifest::record(dir, "export-psi", &written, details)?;
    for m in report.modes.iter().filter(|m| modes.contains(&(m.mode - 1))) {
        println!("psi {:>3}  L2 rel {:.4}  H1 rel {:.4}", m.mode, m.l2_relative, m.h1_relative);
    }
    Ok(())
}

pub fn sweep(s: &Settings) -> Result<(), CliError> {
    let p = problem(s)?;
    let train_set = dataset(s, &p, Split::Train, s.train_count, false)?;
    let tests = test_sets(s, &p)?;
    let rows = training_size_sweep(&p, s.model, &s.sizes, &train_set, &tests, &s.train)?;
    let mut csv = String::from("model,size,split,mean_error_pct\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{:.12e}", r.model, r.size, r.split, r.mean_error);
    }
    let dir = out_dir(s)?;
    let mut written = Vec::new();
    write(dir, format!("{}-{}-sweep.csv", s.problem, s.model), &csv, &mut written)?;
    let mut details = base_details(s);
    details["model"] = json!(s.model);
    details["sizes"] = json!(s.sizes);
    details["train"] = json!(s.train);
    Manifest::record(dir, "sweep", &written, details)?;
    print!("{csv}");
    Ok(())
}

/// A model prediction for one sensor vector, as a field.
struct Prediction<'a> {
    model: &'a OperatorModel,
    sensors: &'a [f64],
}

impl ScalarField for Prediction<'_> {
    fn dim(&self) -> usize {
        self.model.spatial_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.values(x)[0]
    }

    fn values(&self, points: &[f64]) -> Vec<f64> {
        self.model.evaluate(self.sensors, points).expect("points match the model dimension")
    }
}

pub fn report(s: &Settings, bins: usize) -> Result<(), CliError> {
    let p = problem(s)?;
    let tests = test_sets(s, &p)?;
    let models = trained_models(s, &p)?;
    let dir = out_dir(s)?;
    let mut written = Vec::new();
    let refs: Vec<&OperatorModel> = models.iter().collect();
    let table = comparison_table(p.basis(), &refs, &tests)?;
    write(dir, format!("{}-comparison.csv", s.problem), &table.to_csv(), &mut written)?;
    write(dir, format!("{}-comparison.txt", s.problem), &table.to_text(), &mut written)?;
    for d in &tests {
        let h = histogram_export(&projection_errors(p.basis(), d)?, bins)?;
        write(dir, format!("{}-projection-{}-hist.csv", s.problem, d.split), &h.to_csv(), &mut written)?;
        for m in &models {
            let h = histogram_export(&model_errors(m, d)?, bins)?;
            write(dir, format!("{}-{}-{}-hist.csv", s.problem, m.kind(), d.split), &h.to_csv(), &mut written)?;
        }
    }
    if p.spatial_dim() == 2 {
        let d = &tests[0];
        for j in 0..SLICE_SAMPLES.min(d.len()) {
            let f = d.forcing(j)?;
            let u = p.reference(&f)?;
            let c = project(&u, p.basis(), p.mass(), p.mass_rule())?;
            let basis = p.basis();
            let proj = FnField::new(2, |x: &[f64]| basis.synthesize(c.as_slice(), x)[0]);
            let preds: Vec<Prediction> =
                models.iter().map(|m| Prediction { model: m, sensors: d.sensor_vector(j) }).collect();
            let mut fields: Vec<(&str, &dyn ScalarField)> = vec![("forcing", &f), ("reference", &u), ("projection", &proj)];
            for (m, pr) in models.iter().zip(&preds) {
                fields.push((m.kind().name(), pr));
            }
            write(dir, format!("{}-slices-{j}.csv", s.problem), &slice_export(&fields), &mut written)?;
        }
    }
    let mut details = base_details(s);
    details["models"] = json!(models.iter().map(|m| m.kind()).collect::<Vec<_>>());
    details["bins"] = json!(bins);
    Manifest::record(dir, "report", &written, details)?;
    print!("{}", table.to_text());
    Ok(())
}
