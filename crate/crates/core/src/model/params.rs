use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ModelConfig;

/// A named dense array inside a [`ParameterStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered named arrays backed by one contiguous buffer.
///
/// Gradients and optimizer moments use the same layout, so updates are plain
/// elementwise loops over [`data`](Self::data).
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    entries: Vec<ParamEntry>,
    data: Vec<f64>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Appends a zero-filled array and returns its offset. Names must be unique.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        let name = name.into();
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter {name}"
        );
        let offset = self.data.len();
        let len: usize = shape.iter().product();
        self.entries.push(ParamEntry {
            name,
            shape,
            offset,
        });
        self.data.resize(offset + len, 0.0);
        offset
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &self.data[e.offset..e.offset + e.len()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let e = self.entries.iter().find(|e| e.name == name)?;
        let (o, l) = (e.offset, e.len());
        Some(&mut self.data[o..o + l])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn same_layout(&self, other: &ParameterStore) -> bool {
        self.entries == other.entries
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Offsets of an affine map stored as `weight[in][out]`, `bias[out]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerLayout {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln1: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: Norm,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub embed: Linear,
    pub slots: usize,
    pub layers: Vec<LayerLayout>,
    pub amp: Linear,
    pub phase: Linear,
}

fn linear(store: &mut ParameterStore, name: &str, n_in: usize, n_out: usize) -> Linear {
    let w = store.push(alloc::format!("{name}.weight"), vec![n_in, n_out]);
    let b = store.push(alloc::format!("{name}.bias"), vec![n_out]);
    Linear { w, b, n_in, n_out }
}

fn norm(store: &mut ParameterStore, name: &str, dim: usize) -> Norm {
    let g = store.push(alloc::format!("{name}.weight"), vec![dim]);
    let b = store.push(alloc::format!("{name}.bias"), vec![dim]);
    Norm { g, b }
}

/// Builds the zero-filled store and its layout for `cfg`.
pub(crate) fn build_layout(cfg: &ModelConfig) -> (ParameterStore, Layout) {
    let d = cfg.d_model;
    let mut store = ParameterStore::new();
    let embed = linear(&mut store, "embed", cfg.input_width(), d);
    let slots = store.push("pos.slots", vec![cfg.n_slots(), d]);
    let layers = (0..cfg.n_layers)
        .map(|l| {
            let p = alloc::format!("layers.{l}");
            LayerLayout {
                q: linear(&mut store, &alloc::format!("{p}.attn.q"), d, d),
                k: linear(&mut store, &alloc::format!("{p}.attn.k"), d, d),
                v: linear(&mut store, &alloc::format!("{p}.attn.v"), d, d),
                o: linear(&mut store, &alloc::format!("{p}.attn.out"), d, d),
                ln1: norm(&mut store, &alloc::format!("{p}.ln1"), d),
                ff1: linear(&mut store, &alloc::format!("{p}.ff1"), d, cfg.d_ff()),
                ff2: linear(&mut store, &alloc::format!("{p}.ff2"), cfg.d_ff(), d),
                ln2: norm(&mut store, &alloc::format!("{p}.ln2"), d),
            }
        })
        .collect();
    let amp = linear(&mut store, "amp", d, cfg.local_dim);
    let phase = linear(&mut store, "phase", d, cfg.local_dim);
    (
        store,
        Layout {
            embed,
            slots,
            layers,
            amp,
            phase,
        },
    )
}

/// Recovers the layout of a store produced by [`build_layout`] for `cfg`.
pub(crate) fn layout_matches(cfg: &ModelConfig, store: &ParameterStore) -> Option<Layout> {
    let (reference, layout) = build_layout(cfg);
    reference.same_layout(store).then_some(layout)
}
