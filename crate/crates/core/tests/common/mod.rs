#![allow(dead_code)]

pub mod gradcheck;

use std::f64::consts::PI;

use gaitnet::vgrf::{SubjectInfo, NUM_CHANNELS};
use gaitnet::{Dataset, Group, Walk};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gait-like synthetic recordings: every channel is a phase-shifted sinusoid
/// around 5 N plus Gaussian noise, and Parkinson subjects carry an extra
/// constant `offset` on all channels.
pub struct Synthetic {
    pub subjects_per_group: usize,
    pub walks_per_subject: usize,
    pub timesteps: usize,
    pub offset: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for Synthetic {
    fn default() -> Self {
        Synthetic {
            subjects_per_group: 10,
            walks_per_subject: 1,
            timesteps: 300,
            offset: 4.0,
            noise: 0.3,
            seed: 7,
        }
    }
}

pub const PD_UPDRS: [u16; 5] = [2, 10, 20, 30, 40];

impl Synthetic {
    pub fn walks(&self) -> Vec<Walk> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut walks = Vec::new();
        for group in [Group::Parkinson, Group::Control] {
            for s in 0..self.subjects_per_group {
                let (subject, info) = match group {
                    Group::Parkinson => (
                        format!("SyPt{:02}", s + 1),
                        SubjectInfo {
                            group,
                            updrs_total: Some(PD_UPDRS[s % PD_UPDRS.len()]),
                        },
                    ),
                    Group::Control => (
                        format!("SyCo{:02}", s + 1),
                        SubjectInfo {
                            group,
                            updrs_total: None,
                        },
                    ),
                };
                for w in 0..self.walks_per_subject {
                    let shift = if group == Group::Parkinson {
                        self.offset
                    } else {
                        0.0
                    };
                    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                    let mut samples = Vec::with_capacity(self.timesteps * NUM_CHANNELS);
                    for t in 0..self.timesteps {
                        for c in 0..NUM_CHANNELS {
                            let wave = 2.0 * (2.0 * PI * t as f64 / 110.0 + phase + c as f64).sin();
                            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * self.noise;
                            samples.push((5.0 + shift + wave + noise).max(0.0));
                        }
                    }
                    let walk_id = format!("{subject}_{:02}", w + 1);
                    walks.push(Walk::new(walk_id, subject.clone(), info, samples).unwrap());
                }
            }
        }
        walks
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::from_walks(self.walks()).unwrap()
    }
}

/// Writes `walks` as gaitpdb files plus a tab-separated `demographics.txt`
/// under `dir`.
pub fn write_gaitpdb(walks: &[Walk], dir: &std::path::Path) {
    use std::collections::BTreeMap;
    let mut subjects = BTreeMap::new();
    for w in walks {
        gaitnet::vgrf::write_walk_file(w, &dir.join(format!("{}.txt", w.walk_id))).unwrap();
        subjects.insert(w.subject_id.clone(), (w.group, w.updrs_total));
    }
    let mut text = String::from("ID\tGroup\tUPDRS\n");
    for (id, (group, updrs)) in subjects {
        let g = if group == Group::Parkinson {
            "PD"
        } else {
            "CO"
        };
        let u = updrs.map_or("NaN".to_string(), |u| u.to_string());
        text.push_str(&format!("{id}\t{g}\t{u}\n"));
    }
    std::fs::write(dir.join("demographics.txt"), text).unwrap();
}
