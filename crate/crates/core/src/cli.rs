//! Command-line driver. Every subcommand takes one `--seed` from which all of
//! its randomness flows.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::autoencoder::{
    sidecar_path, train_autoencoder, ArchitectureConfig, AutoEncoder, LoadedAutoEncoder, TrainConfig,
};
use crate::cav::{
    significance_test, train_cav, Cav, CavConfig, ConceptFile, ConceptSet, Counter, CounterSet, LatentPool,
    SignificanceConfig, TcavReport,
};
use crate::error::{Error, Result};
use crate::explore::{blend, blend_grid, linspace, query};
use crate::regressor::{train_regressor, Regressor, RegressorConfig};
use crate::service::{serve, SessionBundle};
use crate::shapes::{generate_dataset, Dataset, DatasetConfig, Proportions, Split};
use crate::study::{run_bump_study, BumpStudyConfig};

#[derive(Debug, Parser)]
#[command(name = "concept-forge", version, about = "Concept activation vectors for point-cloud shape latents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fixed,
    Random,
}

impl From<Mode> for Proportions {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Fixed => Proportions::Fixed,
            Mode::Random => Proportions::Random,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1200)]
        cars: usize,
        #[arg(long, default_value_t = 60)]
        cuboids: usize,
        #[arg(long, default_value_t = 60)]
        ellipsoids: usize,
        #[arg(long, default_value_t = 0)]
        bumps: usize,
        /// Proportions of bumped ellipsoids.
        #[arg(long, value_enum, default_value = "random")]
        bump_mode: Mode,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long, default_value_t = 0.25)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the auto-encoder; writes the checkpoint, its sidecar and a loss curve.
    TrainAe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 8)]
        latent: usize,
        /// Encoder hidden widths, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [256, 64, 32])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long)]
        out: PathBuf,
        /// Loss curve CSV; defaults to `<out>.curve.csv`.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the latent-to-drag regressor on a frozen auto-encoder.
    TrainReg {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        /// MSE report CSV; defaults to `<out>.mse.csv`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one CAV from a concept file.
    TrainCav {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        concept: PathBuf,
        /// Counter concept file or `random:N`; defaults to the concept's own counter.
        #[arg(long)]
        counter: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the significance test for every concept file in a directory.
    Tcav {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        reg: PathBuf,
        #[arg(long)]
        concepts: PathBuf,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Blend a dataset design along named CAVs and export the result.
    Blend {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        reg: Option<PathBuf>,
        /// Directory of CAV files.
        #[arg(long)]
        cavs: PathBuf,
        #[arg(long)]
        design: String,
        /// `NAME:EPS`, repeatable.
        #[arg(long = "term")]
        terms: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decode a two-concept blend grid around a design.
    Grid {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        reg: Option<PathBuf>,
        #[arg(long)]
        cav_a: PathBuf,
        #[arg(long)]
        cav_b: PathBuf,
        #[arg(long)]
        design: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        eps_a: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        eps_b: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank dataset designs by a CAV's classifier margin.
    Query {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        cav: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// CSV output; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parametric-concept study on bumped ellipsoids.
    BumpStudy {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 150)]
        shapes: usize,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [256, 64, 32])]
        hidden: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve a trained bundle over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads the auto-encoder and the dataset it was trained on, checking the
/// manifest hash recorded in the sidecar.
fn load_ae_and_data(ae: &Path, data: &Path) -> Result<(LoadedAutoEncoder, Dataset)> {
    let loaded = AutoEncoder::load(ae)?;
    let meta = loaded.meta.as_ref().ok_or_else(|| {
        Error::ArtifactMismatch(format!("{} is missing", sidecar_path(ae).display()))
    })?;
    let dataset = Dataset::load(data)?;
    if meta.manifest_hash != dataset.manifest_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{} was trained on manifest {}, {} has {}",
            ae.display(),
            meta.manifest_hash,
            data.display(),
            dataset.manifest_hash
        )));
    }
    Ok((loaded, dataset))
}

fn load_reg(path: &Path, ae_hash: &str) -> Result<Regressor> {
    let loaded = Regressor::load(path)?;
    if loaded.ae_hash != ae_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{} was trained on auto-encoder {}, not {ae_hash}",
            path.display(),
            loaded.ae_hash
        )));
    }
    Ok(loaded.reg)
}

fn load_cav(path: &Path, ae_hash: &str) -> Result<Cav> {
    let f = Cav::load(path)?;
    if f.ae_hash != ae_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{} was trained on auto-encoder {}, not {ae_hash}",
            path.display(),
            f.ae_hash
        )));
    }
    Ok(f.cav)
}

fn load_cav_dir(dir: &Path, ae_hash: &str) -> Result<Vec<Cav>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_cav(p, ae_hash)).collect()
}

fn design_latent(ae: &AutoEncoder, dataset: &Dataset, id: &str) -> Result<Vec<f64>> {
    let cloud = dataset
        .cloud(id)
        .ok_or_else(|| Error::NotFound(format!("unknown design `{id}`")))?;
    ae.encode(cloud)
}

fn parse_term(s: &str) -> Result<(String, f64)> {
    let (name, eps) = s
        .rsplit_once(':')
        .ok_or_else(|| Error::InvalidInput(format!("term `{s}` is not NAME:EPS")))?;
    let eps: f64 = eps
        .parse()
        .map_err(|_| Error::InvalidInput(format!("term `{s}` has a bad EPS")))?;
    if name.is_empty() || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("term `{s}` is not NAME:EPS")));
    }
    Ok((name.to_string(), eps))
}

fn resolve_counter(
    counter: &Counter,
    concept: &ConceptSet,
    known: &[ConceptFile],
    dataset: &Dataset,
    ae: &AutoEncoder,
    latents: &[Vec<f64>],
) -> Result<CounterSet> {
    match counter {
        Counter::Random(n) => Ok(CounterSet::Random(*n)),
        Counter::Concept(name) => {
            let file = known
                .iter()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::NotFound(format!("concept `{}`: unknown counter `{name}`", concept.name)))?;
            Ok(CounterSet::Concept(file.resolve(dataset, ae, latents)?))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            out,
            cars,
            cuboids,
            ellipsoids,
            bumps,
            bump_mode,
            points,
            val_fraction,
            seed,
        } => {
            let ds = generate_dataset(&DatasetConfig {
                cars,
                cuboids,
                ellipsoids,
                bumps,
                bump_proportions: bump_mode.into(),
                points,
                seed,
                validation_fraction: val_fraction,
                ..DatasetConfig::default()
            })?;
            ds.save(&out)?;
            log::info!("wrote {} shapes to {}", ds.len(), out.display());
        }
        Command::TrainAe {
            data,
            epochs,
            latent,
            hidden,
            batch_size,
            out,
            curve,
            seed,
        } => {
            let dataset = Dataset::load(&data)?;
            let arch = ArchitectureConfig {
                points: dataset.points(),
                latent_dim: latent,
                hidden,
                ..ArchitectureConfig::default()
            };
            let config = TrainConfig {
                epochs,
                batch_size,
                seed,
                ..TrainConfig::default()
            };
            let (ae, c) = train_autoencoder(&dataset, &arch, &config)?;
            ae.save(&out, &dataset.manifest_hash)?;
            write(&curve.unwrap_or_else(|| with_suffix(&out, ".curve.csv")), &c.to_csv())?;
        }
        Command::TrainReg {
            data,
            ae,
            out,
            epochs,
            report,
            seed,
        } => {
            let (loaded, dataset) = load_ae_and_data(&ae, &data)?;
            let latents = loaded.ae.encode_all(&dataset.clouds)?;
            let drags: Vec<f64> = dataset.manifest.entries.iter().map(|e| e.drag).collect();
            let splits: Vec<Split> = dataset.manifest.entries.iter().map(|e| e.split).collect();
            let config = RegressorConfig {
                epochs,
                seed,
                ..RegressorConfig::default()
            };
            let (reg, r) = train_regressor(&latents, &drags, &splits, &config)?;
            reg.save(&out, &loaded.hash)?;
            write(&report.unwrap_or_else(|| with_suffix(&out, ".mse.csv")), &r.to_csv())?;
        }
        Command::TrainCav {
            data,
            ae,
            concept,
            counter,
            out,
            seed,
        } => {
            let (loaded, dataset) = load_ae_and_data(&ae, &data)?;
            let latents = loaded.ae.encode_all(&dataset.clouds)?;
            let file = ConceptFile::load(&concept)?;
            let pos = file.resolve(&dataset, &loaded.ae, &latents)?;
            let neg = match counter {
                Some(c) if c.starts_with("random:") => {
                    random_counter(Counter::parse(&c)?, &pos, &dataset, &latents, seed)?
                }
                Some(path) => ConceptFile::load(Path::new(&path))?.resolve(&dataset, &loaded.ae, &latents)?,
                None => match file.counter()? {
                    Counter::Random(n) => random_counter(Counter::Random(n), &pos, &dataset, &latents, seed)?,
                    Counter::Concept(name) => {
                        let dir = concept.parent().unwrap_or(Path::new("."));
                        let known = ConceptFile::load_dir(dir)?;
                        let f = known
                            .iter()
                            .find(|c| c.name == name)
                            .ok_or_else(|| Error::NotFound(format!("counter concept `{name}` not found")))?;
                        f.resolve(&dataset, &loaded.ae, &latents)?
                    }
                },
            };
            let cfg = CavConfig {
                seed,
                ..CavConfig::default()
            };
            let cav = train_cav(&pos.latents, &neg.latents, &pos.name, &neg.name, &cfg)?;
            cav.save(&out, &loaded.hash)?;
            log::info!("{} vs {}: train accuracy {}", pos.name, neg.name, cav.train_accuracy);
        }
        Command::Tcav {
            data,
            ae,
            reg,
            concepts,
            runs,
            out,
            seed,
        } => {
            let (loaded, dataset) = load_ae_and_data(&ae, &data)?;
            let reg = load_reg(&reg, &loaded.hash)?;
            let latents = loaded.ae.encode_all(&dataset.clouds)?;
            let pool = LatentPool::from_dataset(&dataset, &latents)?;
            let eval: Vec<Vec<f64>> = dataset.indices(Split::Val).iter().map(|&i| latents[i].clone()).collect();
            let files = ConceptFile::load_dir(&concepts)?;
            let mut report = TcavReport::default();
            for (k, file) in files.iter().enumerate() {
                let concept = file.resolve(&dataset, &loaded.ae, &latents)?;
                let counter = resolve_counter(&file.counter()?, &concept, &files, &dataset, &loaded.ae, &latents)?;
                let config = SignificanceConfig {
                    n_runs: runs,
                    seed: seed.wrapping_add(k as u64),
                    cav: CavConfig {
                        seed,
                        ..CavConfig::default()
                    },
                };
                report
                    .rows
                    .push(significance_test(&concept, &counter, &pool, &eval, &reg, &config)?);
            }
            report.save(&out)?;
        }
        Command::Blend {
            data,
            ae,
            reg,
            cavs,
            design,
            terms,
            out,
            seed: _,
        } => {
            let (loaded, dataset) = load_ae_and_data(&ae, &data)?;
            let registry = load_cav_dir(&cavs, &loaded.hash)?;
            let reg = reg.map(|p| load_reg(&p, &loaded.hash)).transpose()?;
            let z = design_latent(&loaded.ae, &dataset, &design)?;
            let parsed: Vec<(String, f64)> = terms.iter().map(|t| parse_term(t)).collect::<Result<_>>()?;
            let mut resolved = Vec::with_capacity(parsed.len());
            for (name, eps) in &parsed {
                let cav = registry
                    .iter()
                    .find(|c| &c.concept_name == name)
                    .ok_or_else(|| Error::NotFound(format!("no CAV named `{name}` in {}", cavs.display())))?;
                resolved.push((cav, *eps));
            }
            let edited = blend(&z, &resolved)?;
            let cloud = loaded.ae.decode(&edited.latent)?;
            create_dir(&out)?;
            cloud.write_xyz(&out.join("blend.xyz"))?;
            cloud.write_ply(&out.join("blend.ply"))?;
            let drag = reg.as_ref().map(|r| r.predict(&edited.latent)).transpose()?;
            let summary = serde_json::json!({
                "design": design,
                "terms": parsed.iter().map(|(n, e)| serde_json::json!({"concept": n, "eps": e})).collect::<Vec<_>>(),
                "latent": edited.latent,
                "out_of_box": edited.out_of_box,
                "drag": drag,
            });
            write(&out.join("blend.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        }
        Command::Grid {
            data,
            ae,
            reg,
            cav_a,
            cav_b,
            design,
            eps_a,
            eps_b,
            out,
            seed: _,
        } => {
            let (loaded, dataset) = load_ae_and_data(&ae, &data)?;
            let a = load_cav(&cav_a, &loaded.hash)?;
            let b = load_cav(&cav_b, &loaded.hash)?;
            let reg = reg.map(|p| load_reg(&p, &loaded.hash)).transpose()?;
            let z = design_latent(&loaded.ae, &dataset, &design)?;
            let eps_a = eps_a.unwrap_or_else(|| linspace(-0.5, 0.5, 5));
            let eps_b = eps_b.unwrap_or_else(|| linspace(-0.5, 0.5, 5));
            let grid = blend_grid(&loaded.ae, reg.as_ref(), &z, &a, &b, &eps_a, &eps_b)?;
            grid.export(&out)?;
        }
        Command::Query {
            data,
            ae,
            cav,
            k,
            out,
            seed: _,
        } => {
            let (loaded, dataset) = load_ae_and_data(&ae, &data)?;
            let cav = load_cav(&cav, &loaded.hash)?;
            let latents = loaded.ae.encode_all(&dataset.clouds)?;
            let ids: Vec<String> = dataset.manifest.entries.iter().map(|e| e.id.clone()).collect();
            let q = query(&ids, &latents, &cav, k)?;
            let mut csv = String::from("list,rank,id,score\n");
            for (list, items) in [("top", &q.top), ("bottom", &q.bottom)] {
                for (rank, r) in items.iter().enumerate() {
                    csv.push_str(&format!("{list},{},{},{}\n", rank + 1, r.id, r.score));
                }
            }
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::BumpStudy {
            mode,
            shapes,
            points,
            epochs,
            hidden,
            out,
            seed,
        } => {
            let mut config = BumpStudyConfig::new(mode.into());
            config.shapes = shapes;
            config.points = points;
            config.arch_hidden = hidden;
            config.train.epochs = epochs;
            config.train.seed = seed;
            config.cav.seed = seed;
            config.seed = seed;
            let study = run_bump_study(&config)?;
            create_dir(&out)?;
            write(&out.join("sweep.csv"), &study.sweep_csv())?;
            write(&out.join("summary.csv"), &study.summary_csv())?;
            write(&out.join("curve.csv"), &study.curve.to_csv())?;
            let mut corr = String::new();
            for row in &study.correlation.matrix {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                corr.push_str(&cells.join(","));
                corr.push('\n');
            }
            write(&out.join("correlation.csv"), &corr)?;
            println!(
                "mean_abs_offdiag {} spearman_rho {} max_axis_change {}",
                study.correlation.mean_abs_offdiag, study.rho, study.max_axis_change
            );
        }
        Command::Serve { bundle, bind } => {
            let bundle = SessionBundle::load(&bundle)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io(Path::new("tokio runtime"), e))?;
            rt.block_on(serve(bundle, bind))?;
        }
    }
    Ok(())
}

fn random_counter(
    counter: Counter,
    pos: &ConceptSet,
    dataset: &Dataset,
    latents: &[Vec<f64>],
    seed: u64,
) -> Result<ConceptSet> {
    use rand::SeedableRng;
    let Counter::Random(n) = counter else {
        unreachable!("caller passes a random counter")
    };
    let pool = LatentPool::from_dataset(dataset, latents)?;
    let exclude = pos.ids.iter().map(String::as_str).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    pool.sample(&format!("random:{n}"), n, &exclude, &mut rng)
}
