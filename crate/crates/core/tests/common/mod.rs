#![allow(dead_code)]

use bsdb::ensemble::{EnsembleConfig, ProjectionBasis};
use bsdb::episodic::{make_synthetic_domains, BlendConfig, EpisodeSpec, SyntheticConfig, SyntheticDomains};
use bsdb::harness::{ExperimentConfig, Variant};
use bsdb::labelprop::LpConfig;
use bsdb::linalg::{randn_matrix, Matrix, RngStream};
use bsdb::nn::{ClassifierParams, GradScope, LossWeights, MlpParams, Network, ParamSet, TrainConfig};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero derivatives.
pub const FD_FLOOR: f64 = 1e-6;
pub const FD_COORDS: usize = 50;

/// A small network whose every tensor has at least `FD_COORDS` entries.
pub struct GradCase {
    pub backbone: MlpParams,
    pub basis: ProjectionBasis,
    pub head: ClassifierParams,
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl GradCase {
    pub fn random(seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let backbone = MlpParams::init(6, &[60, 52], &mut rng).unwrap();
        let basis = ProjectionBasis::from_seed(seed ^ 0xb, 52).unwrap();
        let mut head = ClassifierParams::init(50, 52, 0.3, &mut rng);
        for b in head.bias.iter_mut() {
            *b = 0.1 * rng.standard_normal();
        }
        let inputs = randn_matrix(&mut rng, 12, 6);
        let labels = (0..12).map(|_| rng.below(50)).collect();
        Self {
            backbone,
            basis,
            head,
            inputs,
            labels,
        }
    }

    fn eval(&self, backbone: &MlpParams, head: &ClassifierParams, w: LossWeights) -> (f64, Vec<bool>) {
        let net = Network {
            backbone,
            projection: Some(&self.basis.matrix),
            classifier: head,
        };
        let tape = net.forward(&self.inputs).unwrap();
        let mask = tape
            .pre_activations()
            .iter()
            .flat_map(|z| z.as_slice().iter().map(|&v| v > 0.0))
            .collect();
        (net.loss(&tape, &self.labels, w).unwrap(), mask)
    }
}

/// Worst relative error and number of coordinates checked, per tensor.
#[derive(Debug)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub worst: f64,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Central differences against the analytic backward pass on `FD_COORDS`
/// random coordinates of every trainable tensor. Coordinates whose
/// perturbation flips a ReLU are redrawn.
pub fn check_gradients(case: &GradCase, w: LossWeights, rng: &mut RngStream) -> Vec<TensorCheck> {
    let net = Network {
        backbone: &case.backbone,
        projection: Some(&case.basis.matrix),
        classifier: &case.head,
    };
    let tape = net.forward(&case.inputs).unwrap();
    let grads = net.backward(&tape, &case.labels, w, GradScope::Full).unwrap();
    let gb = grads.backbone.unwrap();
    let (_, base_mask) = case.eval(&case.backbone, &case.head, w);

    let n_backbone = case.backbone.tensors().len();
    let mut names: Vec<String> = (0..case.backbone.layers.len())
        .flat_map(|l| [format!("backbone.{l}.weight"), format!("backbone.{l}.bias")])
        .collect();
    names.push("classifier.weight".into());
    names.push("classifier.bias".into());

    let mut out = Vec::new();
    for (t, name) in names.iter().enumerate() {
        let analytic: Vec<f64> = if t < n_backbone {
            gb.tensors()[t].to_vec()
        } else {
            grads.classifier.tensors()[t - n_backbone].to_vec()
        };
        let mut checked = 0;
        let mut worst: f64 = 0.0;
        let mut attempts = 0;
        while checked < FD_COORDS {
            attempts += 1;
            assert!(attempts < 100 * FD_COORDS, "too many kink crossings in {name}");
            let c = rng.below(analytic.len());
            let mut losses = [0.0; 2];
            let mut kink = false;
            for (s, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut bb = case.backbone.clone();
                let mut hd = case.head.clone();
                if t < n_backbone {
                    bb.tensors_mut()[t][c] += sign * FD_STEP;
                } else {
                    hd.tensors_mut()[t - n_backbone][c] += sign * FD_STEP;
                }
                let (l, mask) = case.eval(&bb, &hd, w);
                kink |= mask != base_mask;
                losses[s] = l;
            }
            if kink {
                continue;
            }
            let numeric = (losses[0] - losses[1]) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[c], numeric));
            checked += 1;
        }
        out.push(TensorCheck {
            name: name.clone(),
            checked,
            worst,
        });
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn dense_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-14, "singular");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (v, p) in aug[r].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    let rows: Vec<Vec<f64>> = aug.into_iter().map(|r| r[n..].to_vec()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Desk-scale domain-shift fixture: 20 × 60 source classes, 8 × 80 target
/// classes plus 400 unlabeled, 16-dimensional, rotated and translated target.
pub fn desk_domains(seed: u64) -> SyntheticDomains {
    let g = SyntheticConfig {
        source_classes: 20,
        source_per_class: 60,
        target_classes: 8,
        target_per_class: 80,
        target_unlabeled: 400,
        dim: 16,
        class_spread: 1.0,
        noise: 1.0,
        shift: 1.0,
        shared_classes: false,
    };
    make_synthetic_domains(&g, &mut RngStream::new(seed)).unwrap()
}

pub fn desk_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        ensemble: EnsembleConfig {
            branches: 4,
            hidden: vec![128, 64],
            share_backbone: false,
        },
        train: TrainConfig {
            epochs: 40,
            ..Default::default()
        },
        blend: BlendConfig::default(),
        lp: LpConfig::default(),
        episode: EpisodeSpec {
            ways: 5,
            shots: 5,
            queries: 15,
            unlabeled: 100,
        },
        n_episodes: 50,
        seed,
        variants: Variant::all_presets(),
    }
}

/// Well separated classes with no domain shift.
pub fn easy_domains(seed: u64) -> SyntheticDomains {
    let g = SyntheticConfig {
        source_classes: 10,
        source_per_class: 40,
        target_classes: 8,
        target_per_class: 40,
        target_unlabeled: 200,
        dim: 8,
        class_spread: 6.0,
        noise: 0.5,
        shift: 0.0,
        shared_classes: false,
    };
    make_synthetic_domains(&g, &mut RngStream::new(seed)).unwrap()
}

pub fn easy_config(seed: u64) -> ExperimentConfig {
    let mut cfg = desk_config(seed);
    cfg.ensemble.hidden = vec![32, 16];
    cfg.n_episodes = 20;
    cfg
}
