use std::fmt;
use std::path::{Path, PathBuf};

use log::info;
use maskgen_core::config::RunConfig;
use maskgen_core::dataset::{
    build_manifest, load_batch, Manifest, ManifestSpec, Split, SplitRatios, SplitSpec,
    MANIFEST_FILE,
};
use maskgen_core::diffusion::{sample_masks, train_diffusion, DiffusionModel};
use maskgen_core::eval::{
    checkpoint_selection, class_distribution, distribution_report, render_bar_chart,
    split_by_prompt,
};
use maskgen_core::label::{read_label_file, render_png, write_iism, ClassCatalog, LabelMap};
use maskgen_core::phantom::generate_corpus;
use maskgen_core::store::{self, export_corpus, list_epochs};
use maskgen_core::vae::{train_vae, MaskVae};
use maskgen_core::Error;
use serde_json::json;

use crate::args::*;
use crate::figures::comparison_grid;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| io(path, e))
}

fn create_dir(path: &Path) -> CliResult {
    std::fs::create_dir_all(path).map_err(|e| io(path, e))
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::with_seed(cli.seed.unwrap_or(0)),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn parse_split(s: &str) -> CliResult<Option<Split>> {
    match s {
        "all" => Ok(None),
        "train" => Ok(Some(Split::Train)),
        "val" => Ok(Some(Split::Val)),
        "test" => Ok(Some(Split::Test)),
        other => Err(CliError::Usage(format!(
            "unknown split `{other}`; use train, val, test or all"
        ))),
    }
}

fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("size `{s}` is not of the form HxW"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    Ok((
        h.trim().parse().map_err(|_| bad())?,
        w.trim().parse().map_err(|_| bad())?,
    ))
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

fn read_manifest(path: &Path) -> CliResult<Manifest> {
    Ok(Manifest::read(&manifest_path(path))?)
}

fn manifest_maps(m: &Manifest, split: Option<Split>) -> CliResult<Vec<LabelMap>> {
    let idx: Vec<usize> = match split {
        Some(s) => m.indices_in(s),
        None => (0..m.records.len()).collect(),
    };
    Ok(load_batch::<f32>(m, &idx, (m.height, m.width))?.maps)
}

/// A manifest directory, or loose `.iism` files read in name order.
fn read_corpus_dir(dir: &Path, catalog: &ClassCatalog) -> CliResult<Vec<LabelMap>> {
    if dir.join(MANIFEST_FILE).is_file() {
        return manifest_maps(&read_manifest(dir)?, None);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "iism"))
        .collect();
    files.sort();
    Ok(files
        .iter()
        .map(|p| read_label_file(p, catalog.len()))
        .collect::<Result<_, _>>()?)
}

fn load_vae(path: &Path) -> CliResult<MaskVae<f32>> {
    Ok(MaskVae::from_checkpoint(&store::load(path)?)?)
}

fn load_diffusion(path: &Path) -> CliResult<DiffusionModel<f32>> {
    Ok(DiffusionModel::from_checkpoint(&store::load(path)?)?)
}

pub fn run(cli: &Cli) -> CliResult {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Phantom(a) => phantom(cli, cfg, a),
        Command::Manifest(a) => manifest(cfg, a),
        Command::Train(TrainCommand::Vae(a)) => train_vae_cmd(cli, cfg, a),
        Command::Train(TrainCommand::Diff(a)) => train_diff_cmd(cli, cfg, a),
        Command::Sample(a) => sample(cli, cfg, a),
        Command::Eval(EvalCommand::Classdist(a)) => classdist(cli, cfg, a),
        Command::Eval(EvalCommand::Fid(a)) => fid(cli, cfg, a),
        Command::Export(a) => export(cli, cfg, a),
    }
}

fn phantom(cli: &Cli, cfg: RunConfig, a: &PhantomArgs) -> CliResult {
    let mut pc = cfg.data.phantom.clone();
    if let Some(p) = a.lesion_prob {
        pc.lesion_probability = p;
    }
    if let Some(s) = a.slices {
        pc.slices_per_volume = s;
    }
    if let Some(s) = a.size {
        pc.image_size = s;
    }
    let patients = a.patients.unwrap_or(cfg.data.patients);
    let out = out_dir(cli, "phantoms");
    let split = SplitSpec {
        ratios: cfg.data.split,
        seed: cfg.seed,
    };
    let m = generate_corpus(&pc, patients, &out, &split)?;
    println!(
        "wrote {} slices from {patients} patients to {} (lesion prevalence {:.3}, digest {})",
        m.records.len(),
        out.display(),
        m.lesion_prevalence(),
        m.digest()?
    );
    Ok(())
}

fn manifest(cfg: RunConfig, a: &ManifestArgs) -> CliResult {
    let ratios = match &a.split {
        Some(v) => {
            let sum: f64 = v.iter().sum();
            if !(sum > 0.0) || v.iter().any(|r| *r < 0.0) {
                return Err(Error::Split(format!(
                    "split ratios {v:?} must be non-negative with a positive sum"
                ))
                .into());
            }
            SplitRatios::new(v[0] / sum, v[1] / sum, v[2] / sum)?
        }
        None => cfg.data.split,
    };
    let selection = a
        .select
        .as_ref()
        .map(|v| (v[0], v[1]))
        .or(cfg.data.selection);
    let image_size = a.size.as_deref().map(parse_size).transpose()?;
    let spec = ManifestSpec {
        split: SplitSpec {
            ratios,
            seed: cfg.seed,
        },
        selection,
        image_size,
    };
    let m = build_manifest(&a.root, &cfg.data.catalog, &spec)?;
    println!(
        "indexed {} slices from {} patients (lesion prevalence {:.3}, digest {})",
        m.records.len(),
        m.patients().len(),
        m.lesion_prevalence(),
        m.digest()?
    );
    Ok(())
}

fn csv_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn train_vae_cmd(cli: &Cli, cfg: RunConfig, a: &TrainVaeArgs) -> CliResult {
    let mut vc = cfg.vae.clone();
    if let Some(e) = a.epochs {
        vc.epochs = e;
    }
    vc.validate()?;
    let m = read_manifest(&a.manifest)?;
    let out = out_dir(cli, "checkpoints/vae");
    create_dir(&out)?;
    let run = train_vae(&vc, &m, cfg.data.sampler, Some(&out))?;
    let mut csv =
        String::from("epoch,train_loss,train_rec,train_kl,val_loss,val_rec,val_kl,val_accuracy\n");
    for s in &run.history {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{},{},{},{}\n",
            s.epoch,
            s.train_loss,
            s.train_rec,
            s.train_kl,
            csv_field(s.val_loss),
            csv_field(s.val_rec),
            csv_field(s.val_kl),
            csv_field(s.val_accuracy)
        ));
    }
    write(&out.join("loss.csv"), csv)?;
    println!(
        "trained {} epochs; best epoch {} saved to {}",
        vc.epochs,
        run.best_epoch,
        out.join("best").display()
    );
    Ok(())
}

fn train_diff_cmd(cli: &Cli, cfg: RunConfig, a: &TrainDiffArgs) -> CliResult {
    let mut dc = cfg.diffusion.clone();
    if let Some(e) = a.epochs {
        dc.epochs = e;
    }
    let vae = load_vae(&a.vae)?;
    if let Some(d) = dc.latent_dim {
        if d != vae.latent_dim() {
            return Err(Error::Config(format!(
                "config latent size {d} does not match the VAE checkpoint's {}",
                vae.latent_dim()
            ))
            .into());
        }
    }
    let m = read_manifest(&a.manifest)?;
    let out = out_dir(cli, "checkpoints/diffusion");
    create_dir(&out)?;
    let run = train_diffusion(&vae, &m, &dc, Some(&out))?;
    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for s in &run.history {
        csv.push_str(&format!(
            "{},{:.6},{:.6}\n",
            s.epoch, s.train_loss, s.val_loss
        ));
    }
    write(&out.join("loss.csv"), csv)?;
    println!(
        "trained {} epochs; checkpoints in {}",
        dc.epochs,
        out.display()
    );
    Ok(())
}

fn sample(cli: &Cli, cfg: RunConfig, a: &SampleArgs) -> CliResult {
    if a.grid && a.real.is_none() {
        return Err(CliError::Usage("--grid needs --real <manifest>".into()));
    }
    let vae = load_vae(&a.vae)?;
    let model = load_diffusion(&a.diff)?;
    let masks = sample_masks(&vae, &model, a.y, a.n, cfg.seed)?;
    let out = out_dir(cli, "samples");
    create_dir(&out)?;
    let catalog = &cfg.data.catalog;
    for (i, m) in masks.iter().enumerate() {
        write_iism(&out.join(format!("{i:05}.iism")), m, catalog.len())?;
        if a.png {
            write(&out.join(format!("{i:05}.png")), render_png(m, catalog)?)?;
        }
    }
    if let Some(real) = a.real.as_ref().filter(|_| a.grid) {
        let m = read_manifest(real)?;
        let want = a.y as u8;
        let idx: Vec<usize> = m
            .indices_in(Split::Test)
            .into_iter()
            .filter(|&i| m.records[i].lesion == want)
            .take(8)
            .collect();
        let real_maps =
            load_batch::<f32>(&m, &idx, (vae.config().height, vae.config().width))?.maps;
        let k = real_maps.len().max(1).min(masks.len());
        let fig = comparison_grid(&real_maps, &masks[..k], catalog);
        let path = out.join("grid.png");
        fig.save(&path).map_err(|e| Error::Image(e.to_string()))?;
    }
    println!(
        "wrote {} masks for y={} to {}",
        masks.len(),
        a.y,
        out.display()
    );
    Ok(())
}

fn classdist(cli: &Cli, cfg: RunConfig, a: &ClassdistArgs) -> CliResult {
    let split = parse_split(a.split.as_deref().unwrap_or("all"))?;
    let real_manifest = read_manifest(&a.real)?;
    let catalog = real_manifest.catalog.clone();
    let real = manifest_maps(&real_manifest, split)?;
    let synth = read_corpus_dir(&a.synth, &catalog)?;
    let (real0, real1) = split_by_prompt(&real, &catalog);
    let (synth0, synth1) = split_by_prompt(&synth, &catalog);
    let out = out_dir(cli, "reports");
    create_dir(&out)?;
    let mut report = serde_json::Map::new();
    for (y, r, s) in [(0, &real0, &synth0), (1, &real1, &synth1)] {
        let key = format!("y{y}");
        if r.is_empty() || s.is_empty() {
            report.insert(
                key,
                json!({"real_count": r.len(), "synth_count": s.len(), "report": null,
                       "note": "cohort is empty on one side"}),
            );
            continue;
        }
        let rd = class_distribution(r, catalog.len())?;
        let sd = class_distribution(s, catalog.len())?;
        let rep = distribution_report(&rd, &sd, Some(&catalog))?;
        write(
            &out.join(format!("classdist_y{y}.png")),
            render_bar_chart(&rep, &catalog)?,
        )?;
        println!(
            "y={y}: {} real, {} synthetic, TV {:.4}",
            r.len(),
            s.len(),
            rep.total_variation
        );
        report.insert(
            key,
            json!({"real_count": r.len(), "synth_count": s.len(), "report": rep}),
        );
    }
    let _ = cfg;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    write(&out.join("classdist.json"), text)?;
    Ok(())
}

/// Expands each path into `(epoch, checkpoint dir)` pairs.
fn expand_checkpoints(paths: &[PathBuf]) -> CliResult<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("meta.json").is_file() {
            let ckpt = store::load(p)?;
            let epoch = ckpt
                .epoch()
                .ok_or_else(|| Error::Checkpoint(format!("{} records no epoch", p.display())))?;
            out.push((epoch, p.clone()));
        } else {
            out.extend(list_epochs(p)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no checkpoints found under --ckpts".into()));
    }
    Ok(out)
}

fn fid(cli: &Cli, cfg: RunConfig, a: &FidArgs) -> CliResult {
    let split = parse_split(&a.split)?;
    let m = read_manifest(&a.real)?;
    let vae = load_vae(&a.vae)?;
    let size = (vae.config().height, vae.config().width);
    let idx: Vec<usize> = match split {
        Some(s) => m.indices_in(s),
        None => (0..m.records.len()).collect(),
    };
    let real = load_batch::<f32>(&m, &idx, size)?.maps;
    let lesion_share = if real.is_empty() {
        0.0
    } else {
        real.iter()
            .filter(|x| maskgen_core::label::lesion_flag(x, &m.catalog) == 1)
            .count() as f64
            / real.len() as f64
    };
    let n = a.n.unwrap_or(cfg.eval.fid_samples);
    let ckpts = expand_checkpoints(&a.ckpts)?;
    let report = checkpoint_selection(
        &ckpts,
        &real,
        m.catalog.len(),
        n,
        cfg.seed,
        |path, n, seed| {
            info!("sampling {n} masks from {}", path.display());
            let model = DiffusionModel::from_checkpoint(&store::load(path)?)?;
            let n1 = (n as f64 * lesion_share).round() as usize;
            let mut masks = sample_masks(&vae, &model, 0, n - n1, seed)?;
            masks.extend(sample_masks(&vae, &model, 1, n1, seed.wrapping_add(1))?);
            Ok(masks)
        },
    )?;
    let out = out_dir(cli, "reports");
    create_dir(&out)?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    write(&out.join("fid.json"), text)?;
    write(&out.join("fid.txt"), report.table())?;
    print!("{}", report.table());
    Ok(())
}

fn export(cli: &Cli, cfg: RunConfig, a: &ExportArgs) -> CliResult {
    let masks = read_corpus_dir(&a.from, &cfg.data.catalog)?;
    let out = out_dir(cli, "release");
    let m = export_corpus(&masks, &out, &cfg.data.catalog)?;
    println!(
        "exported {} masks to {} (digest {})",
        m.records.len(),
        out.display(),
        m.digest()?
    );
    Ok(())
}
