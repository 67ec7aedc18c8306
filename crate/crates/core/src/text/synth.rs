//! Templated generator of emotional dialogue triplets with known ground truth.
//!
//! U1 carries a sampled valence, R1 comes from one of three response
//! families, and U2's valence is drawn from a fixed table indexed by
//! (U1 valence, R1 family). All parameters live in a versioned manifest.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Record, MAX_UTTERANCE_TOKENS};
use super::tokenize::tokenize;
use crate::error::{Error, Result};

const DEFAULT_MANIFEST: &str = include_str!("../../data/synth_manifest.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Negative,
    Neutral,
    Positive,
}

impl Valence {
    pub const ALL: [Valence; 3] = [Valence::Negative, Valence::Neutral, Valence::Positive];

    pub fn sign(self) -> i8 {
        match self {
            Valence::Negative => -1,
            Valence::Neutral => 0,
            Valence::Positive => 1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            -1 => Some(Valence::Negative),
            0 => Some(Valence::Neutral),
            1 => Some(Valence::Positive),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Supportive,
    Neutral,
    Dismissive,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Supportive, Family::Neutral, Family::Dismissive];

    pub fn name(self) -> &'static str {
        match self {
            Family::Supportive => "supportive",
            Family::Neutral => "neutral",
            Family::Dismissive => "dismissive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByValence<T> {
    pub negative: T,
    pub neutral: T,
    pub positive: T,
}

impl<T> ByValence<T> {
    pub fn get(&self, v: Valence) -> &T {
        match v {
            Valence::Negative => &self.negative,
            Valence::Neutral => &self.neutral,
            Valence::Positive => &self.positive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByFamily<T> {
    pub supportive: T,
    pub neutral: T,
    pub dismissive: T,
}

impl<T> ByFamily<T> {
    pub fn get(&self, f: Family) -> &T {
        match f {
            Family::Supportive => &self.supportive,
            Family::Neutral => &self.neutral,
            Family::Dismissive => &self.dismissive,
        }
    }
}

/// Analytic statistics implied by the grammar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStats {
    pub u2_mix: ByValence<f64>,
    pub family_mean_u2_valence: ByFamily<f64>,
    pub supportive_minus_dismissive_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub version: u32,
    pub valence_mix_u1: ByValence<f64>,
    pub family_mix: ByFamily<f64>,
    /// P(U2 valence = negative/neutral/positive | family, U1 valence).
    pub transitions: ByFamily<ByValence<[f64; 3]>>,
    pub slots: BTreeMap<String, Vec<String>>,
    pub u1_templates: ByValence<Vec<String>>,
    pub r1_templates: ByFamily<Vec<String>>,
    pub u2_templates: ByValence<Vec<String>>,
    pub expected: ExpectedStats,
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} is not a distribution: {p:?}")));
    }
    Ok(())
}

fn sample<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if x < acc {
            return i;
        }
    }
    weights.len() - 1
}

impl SynthManifest {
    /// The manifest shipped with the crate.
    pub fn builtin() -> Self {
        serde_json::from_str(DEFAULT_MANIFEST).expect("bundled manifest parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.valence_mix_u1;
        check_distribution("valence_mix_u1", &[v.negative, v.neutral, v.positive])?;
        let f = &self.family_mix;
        check_distribution("family_mix", &[f.supportive, f.neutral, f.dismissive])?;
        for fam in Family::ALL {
            for val in Valence::ALL {
                check_distribution("transition row", self.transitions.get(fam).get(val))?;
            }
        }
        let templates = Valence::ALL
            .iter()
            .flat_map(|&v| self.u1_templates.get(v).iter().chain(self.u2_templates.get(v)))
            .chain(Family::ALL.iter().flat_map(|&f| self.r1_templates.get(f)));
        for t in templates {
            let n = tokenize(&t.replace(['{', '}'], " ")).len();
            if n == 0 || t.split_whitespace().count() > MAX_UTTERANCE_TOKENS {
                return Err(Error::Config(format!("template `{t}` violates the length bound")));
            }
            for slot in t.split_whitespace().filter_map(|w| w.strip_prefix('{')) {
                let name = slot.trim_end_matches('}');
                let name = name.strip_prefix("ref:").unwrap_or(name);
                if self.slots.get(name).is_none_or(Vec::is_empty) {
                    return Err(Error::Config(format!("template `{t}` uses unknown slot `{name}`")));
                }
            }
        }
        for group in [
            Valence::ALL.map(|v| self.u1_templates.get(v).len()),
            Valence::ALL.map(|v| self.u2_templates.get(v).len()),
            Family::ALL.map(|f| self.r1_templates.get(f).len()),
        ] {
            if group.contains(&0) {
                return Err(Error::Config("every template group needs at least one template".into()));
            }
        }
        Ok(())
    }

    /// Mix of U2 valences and mean U2 valence sign per family, in closed form.
    pub fn expected_stats(&self) -> ExpectedStats {
        let mut u2 = [0.0; 3];
        let mut fam_mean = [0.0; 3];
        for (fi, fam) in Family::ALL.into_iter().enumerate() {
            let pf = *self.family_mix.get(fam);
            for v1 in Valence::ALL {
                let p1 = *self.valence_mix_u1.get(v1);
                for (k, v2) in Valence::ALL.into_iter().enumerate() {
                    let p = self.transitions.get(fam).get(v1)[k];
                    u2[k] += pf * p1 * p;
                    fam_mean[fi] += p1 * p * f64::from(v2.sign());
                }
            }
        }
        ExpectedStats {
            u2_mix: ByValence {
                negative: u2[0],
                neutral: u2[1],
                positive: u2[2],
            },
            family_mean_u2_valence: ByFamily {
                supportive: fam_mean[0],
                neutral: fam_mean[1],
                dismissive: fam_mean[2],
            },
            supportive_minus_dismissive_margin: fam_mean[0] - fam_mean[2],
        }
    }

    fn fill<R: Rng>(
        &self,
        template: &str,
        rng: &mut R,
        refs: &mut BTreeMap<String, String>,
        remember: bool,
    ) -> String {
        let mut words = Vec::new();
        for w in template.split_whitespace() {
            let Some(slot) = w.strip_prefix('{').and_then(|s| s.strip_suffix('}')) else {
                words.push(w.to_string());
                continue;
            };
            let (name, is_ref) = match slot.strip_prefix("ref:") {
                Some(n) => (n, true),
                None => (slot, false),
            };
            let value = match refs.get(name) {
                Some(v) if is_ref => v.clone(),
                _ => {
                    let choices = &self.slots[name];
                    let v = choices[rng.gen_range(0..choices.len())].clone();
                    if remember {
                        refs.entry(name.to_string()).or_insert_with(|| v.clone());
                    }
                    v
                }
            };
            words.push(value);
        }
        words.join(" ")
    }

    /// `n` triplets; identical `(n, seed)` gives identical output.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<Record>> {
        if n == 0 {
            return Err(Error::Config("synthetic corpus size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vm = &self.valence_mix_u1;
        let fm = &self.family_mix;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let v1 = Valence::ALL[sample(&mut rng, &[vm.negative, vm.neutral, vm.positive])];
            let mut refs = BTreeMap::new();
            let t1 = self.u1_templates.get(v1);
            let u1 = self.fill(&t1[rng.gen_range(0..t1.len())], &mut rng, &mut refs, true);

            let fam = Family::ALL[sample(&mut rng, &[fm.supportive, fm.neutral, fm.dismissive])];
            let tr = self.r1_templates.get(fam);
            let r1 = self.fill(&tr[rng.gen_range(0..tr.len())], &mut rng, &mut refs, false);

            let v2 = Valence::ALL[sample(&mut rng, self.transitions.get(fam).get(v1))];
            let t2 = self.u2_templates.get(v2);
            let u2 = self.fill(&t2[rng.gen_range(0..t2.len())], &mut rng, &mut refs, false);

            out.push(Record {
                id: None,
                u1,
                r1,
                u2,
                s1: None,
                s2: None,
                delta_norm: None,
                gt_valence_u1: Some(v1.sign()),
                gt_valence_u2: Some(v2.sign()),
                r1_family: Some(fam.name().to_string()),
            });
        }
        Ok(out)
    }
}

/// Generates `n` records from the built-in manifest.
pub fn synth_corpus(n: usize, seed: u64) -> Result<Vec<Record>> {
    SynthManifest::builtin().generate(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{filter_triplet, Triplet};

    #[test]
    fn builtin_manifest_is_valid_and_expected_block_matches() {
        let m = SynthManifest::builtin();
        m.validate().unwrap();
        let computed = m.expected_stats();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        assert!(close(computed.u2_mix.negative, m.expected.u2_mix.negative));
        assert!(close(computed.u2_mix.positive, m.expected.u2_mix.positive));
        assert!(close(
            computed.supportive_minus_dismissive_margin,
            m.expected.supportive_minus_dismissive_margin
        ));
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_corpus(50, 7).unwrap(), synth_corpus(50, 7).unwrap());
        assert_ne!(synth_corpus(50, 7).unwrap(), synth_corpus(50, 8).unwrap());
    }

    #[test]
    fn zero_size_rejected() {
        assert!(matches!(synth_corpus(0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn supportive_beats_dismissive_on_u2_valence() {
        let recs = synth_corpus(1000, 11).unwrap();
        let mean = |fam: &str| {
            let vals: Vec<f64> = recs
                .iter()
                .filter(|r| r.r1_family.as_deref() == Some(fam))
                .map(|r| f64::from(r.gt_valence_u2.unwrap()))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let margin = mean("supportive") - mean("dismissive");
        let expected = SynthManifest::builtin().expected.supportive_minus_dismissive_margin;
        assert!(margin > 0.0);
        assert!((margin - expected).abs() < 0.2, "margin {margin} vs {expected}");
    }

    #[test]
    fn all_generated_pass_filter() {
        for rec in synth_corpus(500, 3).unwrap() {
            assert!(filter_triplet(&Triplet::from_record(&rec)), "{rec:?}");
        }
    }
}
