use tqs::checkpoint::{decode, encode, header_text, load, save, FORMAT_VERSION, MAGIC};
use tqs::core::family::{HamiltonianFamily, Interval};
use tqs::core::model::Mask;
use tqs::core::symmetry::SymmetryKind;
use tqs::core::trainer::{pretrain, Checkpoint, Mode, TrainConfig, TrainState};
use tqs::core::{ModelConfig, SamplerConfig, SpinConfig, TqsModel};
use tqs::ExitKind;

fn trained(steps: u64) -> Checkpoint {
    let family = HamiltonianFamily::tfi(1.0, Interval::new(0.5, 1.5).unwrap(), vec![4, 6]).unwrap();
    let model = TqsModel::new(ModelConfig::small(1), 5).unwrap();
    let params = model.into_params();
    let mut ckpt = Checkpoint {
        model_config: ModelConfig::small(1),
        family,
        symmetries: vec![SymmetryKind::SpinFlip],
        u1: false,
        state: TrainState::new(&params, Mode::Pretrain),
        params,
        seeds: vec![],
    };
    let cfg = TrainConfig::new(steps, SamplerConfig::new(1000, 16, 0).unwrap());
    pretrain(&mut ckpt, &cfg, 9, |_, _, _| Ok(())).unwrap();
    ckpt
}

#[test]
fn checkpoint_round_trip_preserves_everything() {
    let ckpt = trained(3);
    let bytes = encode(&ckpt);
    assert_eq!(&bytes[..7], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), FORMAT_VERSION);
    let back = decode(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(encode(&back), bytes);

    let j = ckpt.family.couplings(6, vec![0.8]).unwrap();
    let s = SpinConfig::parse("010110").unwrap();
    let a = ckpt.model().unwrap().log_psi(&j, &s, Mask::None).unwrap();
    let b = back.model().unwrap().log_psi(&j, &s, Mask::None).unwrap();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.tqs");
    save(&path, &ckpt).unwrap();
    assert_eq!(load(&path).unwrap(), ckpt);
}

#[test]
fn header_is_canonical_text() {
    let ckpt = trained(2);
    let text = header_text(&ckpt);
    let expected = "model.n_layers=2\nmodel.d_model=16\nmodel.n_heads=2\nmodel.local_dim=2\n\
        model.n_couplings=1\nmodel.max_context=128\nfamily.model=tfi\nfamily.fixed.J=1.0\n\
        family.prior.h=0.5,1.5\nfamily.sizes=4,6\nsymmetries=spin_flip\nu1=false\n\
        train.mode=pretrain\ntrain.step=2\nseeds=9\n";
    assert_eq!(text, expected);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = encode(&trained(1));
    let usage = |b: &[u8]| decode(b).unwrap_err().kind == ExitKind::Usage;
    assert!(usage(&bytes[..bytes.len() - 3]));
    assert!(usage(b"NOTACKPT"));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(usage(&extra));
    let mut version = bytes.clone();
    version[7] = 99;
    assert!(usage(&version));
    // A header that disagrees with the stored arrays.
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let pos = text.find("model.d_model=16").unwrap() + "model.d_model=".len();
    let mut wrong = bytes.clone();
    wrong[pos] = b'2';
    assert!(usage(&wrong));
}
