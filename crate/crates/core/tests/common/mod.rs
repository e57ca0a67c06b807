#![allow(dead_code)]

use concept_forge::autoencoder::{train_autoencoder, ArchitectureConfig, AutoEncoder, TrainConfig};
use concept_forge::cav::{train_cav, Cav, CavConfig, TcavReport, TcavRow};
use concept_forge::regressor::{train_regressor, Regressor, RegressorConfig};
use concept_forge::service::SessionBundle;
use concept_forge::shapes::{generate_dataset, Dataset, DatasetConfig};

pub struct Fixture {
    pub dataset: Dataset,
    pub ae: AutoEncoder,
    pub ae_hash: String,
    pub latents: Vec<Vec<f64>>,
    pub reg: Regressor,
    pub cavs: Vec<Cav>,
}

pub fn small_arch(points: usize) -> ArchitectureConfig {
    ArchitectureConfig {
        points,
        hidden: vec![32, 16],
        ..ArchitectureConfig::default()
    }
}

/// A quickly trained pipeline on a small dataset.
pub fn fixture() -> Fixture {
    let dataset = generate_dataset(&DatasetConfig {
        cars: 24,
        cuboids: 12,
        ellipsoids: 12,
        points: 64,
        seed: 11,
        ..DatasetConfig::default()
    })
    .unwrap();
    let train = TrainConfig {
        epochs: 30,
        seed: 2,
        ..TrainConfig::default()
    };
    let (ae, _) = train_autoencoder(&dataset, &small_arch(64), &train).unwrap();
    let ae_hash = concept_forge::numerics::sha256_hex(ae.to_text().as_bytes());
    let latents = ae.encode_all(&dataset.clouds).unwrap();
    let drags: Vec<f64> = dataset.manifest.entries.iter().map(|e| e.drag).collect();
    let splits: Vec<_> = dataset.manifest.entries.iter().map(|e| e.split).collect();
    let (reg, _) = train_regressor(&latents, &drags, &splits, &RegressorConfig {
        epochs: 50,
        ..RegressorConfig::default()
    })
    .unwrap();
    let pick = |label: &str| -> Vec<Vec<f64>> {
        dataset
            .manifest
            .entries
            .iter()
            .zip(&latents)
            .filter(|(e, _)| e.has_label(label))
            .map(|(_, z)| z.clone())
            .collect()
    };
    let cfg = CavConfig::default();
    let cavs = vec![
        train_cav(&pick("cuboid"), &pick("ellipsoid"), "Cuboids", "Ellipsoids", &cfg).unwrap(),
        train_cav(&pick("sport"), &pick("sedan"), "Sport", "Sedan", &cfg).unwrap(),
    ];
    Fixture {
        dataset,
        ae,
        ae_hash,
        latents,
        reg,
        cavs,
    }
}

pub fn sample_report() -> TcavReport {
    TcavReport {
        rows: vec![TcavRow {
            concept: "Cuboids".into(),
            counter: "Ellipsoids".into(),
            sign_fraction: 0.8,
            mean_magnitude: 0.01,
            std_error: 0.02,
            p_value: 0.001,
            n_runs: 20,
            mean_abs_magnitude: 0.02,
            random_sign_fraction: 0.5,
            random_std_error: 0.05,
        }],
    }
}

pub fn bundle(f: &Fixture) -> SessionBundle {
    SessionBundle::new(
        f.ae.clone(),
        f.ae_hash.clone(),
        f.reg.clone(),
        &f.ae_hash,
        f.dataset.clone(),
        f.cavs.iter().map(|c| (c.clone(), f.ae_hash.clone())).collect(),
        Some(sample_report()),
    )
    .unwrap()
}
