use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use concept_forge::autoencoder::{train_autoencoder, ArchitectureConfig, TrainConfig};
use concept_forge::cav::{train_cav, CavConfig};
use concept_forge::explore::blend;
use concept_forge::regressor::{train_regressor, RegressorConfig};
use concept_forge::service::{BundleManifest, SessionBundle, BUNDLE_FILE, BUNDLE_FORMAT};
use concept_forge::shapes::{generate_dataset, DatasetConfig};
use concept_forge_ffi::*;

fn write_bundle(dir: &Path) {
    let dataset = generate_dataset(&DatasetConfig {
        cars: 12,
        cuboids: 6,
        ellipsoids: 6,
        points: 32,
        seed: 4,
        ..DatasetConfig::default()
    })
    .unwrap();
    let arch = ArchitectureConfig {
        points: 32,
        hidden: vec![16, 8],
        ..ArchitectureConfig::default()
    };
    let train = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let (ae, _) = train_autoencoder(&dataset, &arch, &train).unwrap();
    let latents = ae.encode_all(&dataset.clouds).unwrap();
    let drags: Vec<f64> = dataset.manifest.entries.iter().map(|e| e.drag).collect();
    let splits: Vec<_> = dataset.manifest.entries.iter().map(|e| e.split).collect();
    let reg_cfg = RegressorConfig {
        epochs: 10,
        ..RegressorConfig::default()
    };
    let (reg, _) = train_regressor(&latents, &drags, &splits, &reg_cfg).unwrap();
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
    let cuboids = train_cav(&pick("cuboid"), &pick("ellipsoid"), "Cuboids", "Ellipsoids", &cfg).unwrap();
    let sport = train_cav(&pick("sport"), &pick("sedan"), "Sport", "Sedan", &cfg).unwrap();

    dataset.save(&dir.join("data")).unwrap();
    let hash = ae.save(&dir.join("ae.txt"), &dataset.manifest_hash).unwrap();
    reg.save(&dir.join("reg.txt"), &hash).unwrap();
    std::fs::create_dir_all(dir.join("cavs")).unwrap();
    cuboids.save(&dir.join("cavs/cuboids.json"), &hash).unwrap();
    sport.save(&dir.join("cavs/sport.json"), &hash).unwrap();
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        ae: "ae.txt".into(),
        regressor: "reg.txt".into(),
        data: "data".into(),
        cavs: "cavs".into(),
        tcav: None,
    };
    std::fs::write(dir.join(BUNDLE_FILE), serde_json::to_string(&manifest).unwrap()).unwrap();
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cf_last_error()) }.to_string_lossy().into_owned()
}

fn load(dir: &Path) -> *mut CfBundle {
    let path = CString::new(dir.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { cf_bundle_load(path.as_ptr(), &mut handle) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert!(!handle.is_null());
    handle
}

#[test]
fn calls_match_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    write_bundle(tmp.path());
    let lib = SessionBundle::load(tmp.path()).unwrap();
    let h = load(tmp.path());
    unsafe {
        let p = cf_bundle_points(h);
        let d = cf_bundle_latent_dim(h);
        assert_eq!((p, d), (32, 8));
        assert_eq!(cf_concept_count(h), 2);
        let names: Vec<String> = (0..2)
            .map(|i| CStr::from_ptr(cf_concept_name(h, i)).to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["Cuboids", "Sport"]);
        assert!(cf_concept_name(h, 2).is_null());

        let cloud = lib.dataset.clouds[0].to_flat();
        let mut z = vec![0.0; d];
        assert_eq!(cf_encode(h, cloud.as_ptr(), cloud.len(), z.as_mut_ptr(), d), CfStatus::Ok);
        assert_eq!(z, lib.ae.encode(&lib.dataset.clouds[0]).unwrap());

        let mut pts = vec![0.0; 3 * p];
        assert_eq!(cf_decode(h, z.as_ptr(), d, pts.as_mut_ptr(), pts.len()), CfStatus::Ok);
        assert_eq!(pts, lib.ae.decode(&z).unwrap().to_flat());

        let mut drag = f64::NAN;
        assert_eq!(cf_predict_drag(h, z.as_ptr(), d, &mut drag), CfStatus::Ok);
        assert_eq!(drag, lib.regressor.predict(&z).unwrap());

        let term_names = [CString::new("Cuboids").unwrap(), CString::new("Sport").unwrap()];
        let ptrs: Vec<_> = term_names.iter().map(|n| n.as_ptr()).collect();
        let eps = [0.3, -0.2];
        let mut edited = vec![0.0; d];
        let mut oob = true;
        let status = cf_blend(h, z.as_ptr(), d, ptrs.as_ptr(), eps.as_ptr(), 2, edited.as_mut_ptr(), &mut oob);
        assert_eq!(status, CfStatus::Ok);
        let expected = blend(&z, &[(&lib.cavs["Cuboids"], 0.3), (&lib.cavs["Sport"], -0.2)]).unwrap();
        assert_eq!(edited, expected.latent);
        assert_eq!(oob, expected.out_of_box);

        let status = cf_blend(h, z.as_ptr(), d, ptr::null(), ptr::null(), 0, edited.as_mut_ptr(), ptr::null_mut());
        assert_eq!(status, CfStatus::Ok);
        assert_eq!(edited, z);
        cf_bundle_free(h);
    }
}

#[test]
fn failures_report_codes_and_messages() {
    let tmp = tempfile::tempdir().unwrap();
    write_bundle(tmp.path());
    let h = load(tmp.path());
    unsafe {
        let z = [0.0; 8];
        let mut pts = vec![0.0; 96];
        assert_eq!(cf_decode(h, z.as_ptr(), 7, pts.as_mut_ptr(), 96), CfStatus::DimensionMismatch);
        assert!(last_error().contains("latent"));
        assert_eq!(cf_decode(ptr::null(), z.as_ptr(), 8, pts.as_mut_ptr(), 96), CfStatus::NullPointer);
        assert_eq!(cf_decode(h, ptr::null(), 8, pts.as_mut_ptr(), 96), CfStatus::NullPointer);
        assert_eq!(cf_predict_drag(h, z.as_ptr(), 8, ptr::null_mut()), CfStatus::NullPointer);

        let unknown = CString::new("Wings").unwrap();
        let names = [unknown.as_ptr()];
        let mut out = vec![0.0; 8];
        let status = cf_blend(h, z.as_ptr(), 8, names.as_ptr(), [0.1].as_ptr(), 1, out.as_mut_ptr(), ptr::null_mut());
        assert_eq!(status, CfStatus::NotFound);
        assert!(last_error().contains("Wings"));

        assert_eq!(cf_decode(h, z.as_ptr(), 8, pts.as_mut_ptr(), 96), CfStatus::Ok);
        assert_eq!(last_error(), "");
        cf_bundle_free(h);
        cf_bundle_free(ptr::null_mut());
        assert_eq!(cf_bundle_points(ptr::null()), 0);
    }

    let missing = CString::new(tmp.path().join("nope").to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { cf_bundle_load(missing.as_ptr(), &mut handle) }, CfStatus::Io);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { cf_bundle_load(ptr::null(), &mut handle) }, CfStatus::NullPointer);
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/concept_forge.h")).unwrap();
    for name in [
        "cf_last_error",
        "cf_bundle_load",
        "cf_bundle_free",
        "cf_bundle_points",
        "cf_bundle_latent_dim",
        "cf_concept_count",
        "cf_concept_name",
        "cf_encode",
        "cf_decode",
        "cf_predict_drag",
        "cf_blend",
        "CF_STATUS_DIMENSION_MISMATCH",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
