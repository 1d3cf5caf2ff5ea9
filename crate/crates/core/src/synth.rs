//! Synthetic OpenFDA-style corpus with a known outcome rule.
//!
//! Each report draws a species, demographics in mixed units, one or two
//! drugs from a species-specific formulary and one to four benign reaction
//! terms. The latent outcome is Death when
//!
//! * the report carries one of the lethal reaction terms (drawn with
//!   probability [`SynthParams::p_lethal`]), or
//! * the animal is old for its species (age at or above
//!   [`SynthParams::old_fraction`] of the species' maximum age) and receives a
//!   cardiac drug,
//!
//! and Recovered otherwise. The latent label is then flipped with probability
//! [`SynthParams::label_noise`]. A share of reports is published as Ongoing or
//! Unknown (the unlabeled pool), Euthanized, or with an extra
//! "Lack of efficacy" reaction; recovered reports are sometimes published as
//! recovered with sequela. Ages, weights and genders are occasionally missing.
//!
//! Everything is a pure function of the seed.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use crate::rng::{derive, stream, StreamRng};

pub struct SynthParams {
    pub n_reports: usize,
    pub n_quarters: usize,
    pub seed: u64,
    pub p_lethal: f64,
    pub old_fraction: f64,
    pub label_noise: f64,
    pub p_unlabeled: f64,
    pub p_euthanized: f64,
    pub p_lack_of_efficacy: f64,
    pub p_sequela: f64,
    pub p_missing: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_reports: 5000,
            n_quarters: 4,
            seed: 20240101,
            p_lethal: 0.105,
            old_fraction: 0.7,
            label_noise: 0.02,
            p_unlabeled: 0.08,
            p_euthanized: 0.03,
            p_lack_of_efficacy: 0.02,
            p_sequela: 0.1,
            p_missing: 0.05,
        }
    }
}

struct Species {
    name: &'static str,
    share: f64,
    max_age_years: f64,
    weight_kg: (f64, f64),
    breeds: &'static [&'static str],
    formulary: &'static [usize],
}

/// `(name, ATCvet code, molecular weight)`.
const INGREDIENTS: [(&str, &str, f64); 40] = [
    ("Carprofen", "QM01AE91", 273.71),
    ("Meloxicam", "QM01AC06", 351.4),
    ("Robenacoxib", "QM01AH91", 327.3),
    ("Firocoxib", "QM01AH90", 336.4),
    ("Aspirin", "QN02BA01", 180.16),
    ("Ivermectin", "QP54AA01", 875.1),
    ("Selamectin", "QP54AA05", 769.9),
    ("Milbemycin oxime", "QP54AB01", 555.7),
    ("Fipronil", "QP53AX15", 437.1),
    ("Imidacloprid", "QP53AX17", 255.66),
    ("Fluralaner", "QP53BE02", 556.3),
    ("Afoxolaner", "QP53BE01", 625.9),
    ("Sarolaner", "QP53BE03", 581.4),
    ("Praziquantel", "QP52AA01", 312.4),
    ("Pyrantel", "QP52AF02", 206.31),
    ("Fenbendazole", "QP52AC13", 299.3),
    ("Amoxicillin", "QJ01CA04", 365.4),
    ("Clavulanic acid", "QJ01CR02", 199.16),
    ("Cefovecin", "QJ01DD91", 453.5),
    ("Enrofloxacin", "QJ01MA90", 359.4),
    ("Doxycycline", "QJ01AA02", 444.4),
    ("Oxytetracycline", "QJ01AA06", 460.4),
    ("Tylosin", "QJ01FA90", 916.1),
    ("Florfenicol", "QJ01BA90", 358.2),
    ("Ceftiofur", "QJ01DD90", 523.6),
    ("Maropitant", "QA04AD90", 468.7),
    ("Oclacitinib", "QD11AH90", 337.4),
    ("Prednisolone", "QH02AB06", 360.4),
    ("Dexamethasone", "QH02AB02", 392.5),
    ("Phenobarbital", "QN03AA02", 232.24),
    ("Levetiracetam", "QN03AX14", 170.21),
    ("Pimobendan", "QC01CE90", 334.4),
    ("Enalapril", "QC09AA02", 376.4),
    ("Furosemide", "QC03CA01", 330.7),
    ("Levothyroxine", "QH03AA01", 776.9),
    ("Methimazole", "QH03BB02", 114.17),
    ("Xylazine", "QN05CM92", 220.34),
    ("Ketamine", "QN01AX03", 237.72),
    ("Propofol", "QN01AX10", 178.27),
    ("Butorphanol", "QN02AF01", 327.5),
];

/// Indices into [`INGREDIENTS`].
const CARDIAC: [usize; 3] = [31, 32, 33];

const ATC_NAMES: [(&str, &str); 31] = [
    ("QA04AD", "Other antiemetics"),
    ("QC01CE", "Phosphodiesterase inhibitors"),
    ("QC03CA", "Sulfonamides, plain"),
    ("QC09AA", "ACE inhibitors, plain"),
    ("QD11AH", "Agents for dermatitis, excluding corticosteroids"),
    ("QH02AB", "Glucocorticoids"),
    ("QH03AA", "Thyroid hormones"),
    ("QH03BB", "Sulfur-containing imidazole derivatives"),
    ("QJ01AA", "Tetracyclines"),
    ("QJ01BA", "Amphenicols"),
    ("QJ01CA", "Penicillins with extended spectrum"),
    ("QJ01CR", "Combinations of penicillins"),
    ("QJ01DD", "Third-generation cephalosporins"),
    ("QJ01FA", "Macrolides"),
    ("QJ01MA", "Fluoroquinolones"),
    ("QM01AC", "Oxicams"),
    ("QM01AE", "Propionic acid derivatives"),
    ("QM01AH", "Coxibs"),
    ("QN01AX", "Other general anesthetics"),
    ("QN02AF", "Morphinan derivatives"),
    ("QN02BA", "Salicylic acid and derivatives"),
    ("QN03AA", "Barbiturates and derivatives"),
    ("QN03AX", "Other antiepileptics"),
    ("QN05CM", "Other hypnotics and sedatives"),
    ("QP52AA", "Quinoline derivatives"),
    ("QP52AC", "Benzimidazoles"),
    ("QP52AF", "Tetrahydropyrimidines"),
    ("QP53AX", "Other ectoparasiticides for topical use"),
    ("QP53BE", "Isoxazolines"),
    ("QP54AA", "Avermectins"),
    ("QP54AB", "Milbemycins"),
];

/// `(HLT, SOC, lower-level terms)`.
const BENIGN_TERMS: [(&str, &str, &[&str]); 18] = [
    ("Emesis", "Digestive tract disorders", &["Vomiting", "Retching", "Regurgitation"]),
    ("Diarrhoea", "Digestive tract disorders", &["Diarrhoea", "Loose stool", "Haemorrhagic diarrhoea"]),
    ("Anorexia", "Systemic disorders", &["Anorexia", "Inappetence"]),
    ("Lethargy", "Systemic disorders", &["Lethargy", "Depression", "Weakness"]),
    ("Pruritus", "Skin and appendages disorders", &["Pruritus", "Scratching"]),
    ("Erythema", "Skin and appendages disorders", &["Erythema", "Skin redness", "Rash"]),
    ("Alopecia", "Skin and appendages disorders", &["Alopecia", "Hair loss"]),
    ("Hyperactivity", "Behavioural disorders", &["Hyperactivity", "Restlessness", "Agitation"]),
    ("Ataxia", "Neurological disorders", &["Ataxia", "Incoordination"]),
    ("Tremor", "Neurological disorders", &["Tremor", "Muscle twitching"]),
    ("Polydipsia", "Metabolism disorders", &["Polydipsia", "Increased thirst"]),
    ("Polyuria", "Renal and urinary disorders", &["Polyuria", "Increased urination"]),
    ("Injection site reaction", "Application site disorders", &["Injection site swelling", "Injection site pain"]),
    ("Hypersalivation", "Digestive tract disorders", &["Hypersalivation", "Drooling"]),
    ("Pyrexia", "Systemic disorders", &["Fever", "Hyperthermia"]),
    ("Coughing", "Respiratory tract disorders", &["Coughing", "Gagging"]),
    ("Lameness", "Musculoskeletal disorders", &["Lameness", "Limping"]),
    ("Ocular discharge", "Eye disorders", &["Ocular discharge", "Epiphora"]),
];

const LETHAL_TERMS: [(&str, &str, &[&str]); 4] = [
    ("Cardiac arrest", "Cardio-vascular system disorders", &["Cardiac arrest", "Asystole"]),
    ("Respiratory failure", "Respiratory tract disorders", &["Respiratory arrest", "Apnoea", "Respiratory failure"]),
    ("Hepatic failure", "Hepato-biliary disorders", &["Acute hepatic failure", "Liver failure"]),
    ("Circulatory shock", "Cardio-vascular system disorders", &["Shock", "Circulatory collapse", "Anaphylactic shock"]),
];

pub const LACK_OF_EFFICACY_HLT: &str = "Lack of efficacy";

const SPECIES: [Species; 9] = [
    Species {
        name: "Dog",
        share: 0.45,
        max_age_years: 16.0,
        weight_kg: (2.0, 60.0),
        breeds: &["Labrador Retriever", "German Shepherd", "Beagle", "Mixed", "Poodle"],
        formulary: &[0, 1, 3, 4, 5, 7, 10, 11, 12, 13, 14, 16, 17, 18, 19, 25, 26, 27, 29, 30, 31, 32, 33, 34, 36, 37, 38, 39],
    },
    Species {
        name: "Cat",
        share: 0.25,
        max_age_years: 18.0,
        weight_kg: (1.5, 8.0),
        breeds: &["Domestic Shorthair", "Siamese", "Maine Coon", "Persian"],
        formulary: &[1, 2, 6, 8, 9, 10, 13, 14, 16, 17, 18, 20, 25, 27, 28, 31, 32, 33, 35, 37, 38],
    },
    Species {
        name: "Cattle",
        share: 0.08,
        max_age_years: 15.0,
        weight_kg: (40.0, 900.0),
        breeds: &["Holstein", "Angus", "Hereford"],
        formulary: &[1, 5, 15, 19, 21, 22, 23, 24, 28, 33, 36, 37],
    },
    Species {
        name: "Pig",
        share: 0.04,
        max_age_years: 8.0,
        weight_kg: (5.0, 250.0),
        breeds: &["Large White", "Duroc"],
        formulary: &[5, 15, 16, 19, 21, 22, 23, 24, 33],
    },
    Species {
        name: "Sheep",
        share: 0.03,
        max_age_years: 10.0,
        weight_kg: (5.0, 100.0),
        breeds: &["Merino", "Suffolk"],
        formulary: &[5, 15, 19, 21, 22, 23, 28, 33],
    },
    Species {
        name: "Goat",
        share: 0.02,
        max_age_years: 12.0,
        weight_kg: (5.0, 90.0),
        breeds: &["Boer", "Nubian"],
        formulary: &[5, 15, 19, 21, 22, 28, 33],
    },
    Species {
        name: "Horse",
        share: 0.05,
        max_age_years: 30.0,
        weight_kg: (150.0, 700.0),
        breeds: &["Thoroughbred", "Quarter Horse", "Arabian"],
        formulary: &[0, 1, 5, 7, 13, 14, 15, 16, 27, 28, 31, 33, 36, 37, 38, 39],
    },
    Species {
        name: "Chicken",
        share: 0.05,
        max_age_years: 3.0,
        weight_kg: (0.5, 4.0),
        breeds: &["Broiler", "Leghorn"],
        formulary: &[16, 19, 20, 21, 22, 23, 15],
    },
    Species {
        name: "Turkey",
        share: 0.03,
        max_age_years: 3.0,
        weight_kg: (2.0, 15.0),
        breeds: &["Broad Breasted White"],
        formulary: &[16, 19, 20, 21, 22, 23],
    },
];

const GENDERS: [&str; 4] = ["Male", "Female", "Neutered Male", "Spayed Female"];
const ROUTES: [&str; 4] = ["Oral", "Topical", "Subcutaneous", "Intramuscular"];
const FORMS: [&str; 5] = ["Tablet", "Chewable tablet", "Solution", "Injectable solution", "Spot-on"];

/// Generated corpus: quarterly JSON documents and the three lookup tables.
pub struct Corpus {
    /// `(file name, JSON text)`.
    pub quarters: Vec<(String, String)>,
    pub veddra_tsv: String,
    pub atcvet_tsv: String,
    pub descriptors_tsv: String,
}

/// Latent class of a report before noise and publication effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latent {
    Death,
    Recovered,
}

/// Ground truth kept next to each report, for tests.
pub struct Truth {
    pub key: String,
    pub latent: Latent,
    pub status: &'static str,
}

fn pick_species(rng: &mut StreamRng) -> &'static Species {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for s in &SPECIES {
        acc += s.share;
        if u < acc {
            return s;
        }
    }
    &SPECIES[SPECIES.len() - 1]
}

fn round_to(x: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    (x * p).round() / p
}

fn age_json(rng: &mut StreamRng, years: f64) -> Value {
    let u: f64 = rng.gen();
    let (value, unit) = if u < 0.6 || years >= 3.0 {
        (round_to(years, 1), "Year")
    } else if u < 0.8 {
        ((years * 12.0).round().max(1.0), "Month")
    } else if u < 0.9 {
        ((years * 52.0).round().max(1.0), "Week")
    } else {
        ((years * 365.0).round().max(1.0), "Day")
    };
    json!({"min": value.to_string(), "unit": unit})
}

fn weight_json(rng: &mut StreamRng, kg: f64) -> Value {
    let u: f64 = rng.gen();
    let (value, unit) = if kg < 5.0 && u < 0.5 {
        ((kg * 1000.0).round(), "Gram")
    } else if u < 0.65 {
        (round_to(kg, 1), "Kilogram")
    } else {
        (round_to(kg / 0.45359237, 1), "Pound")
    };
    json!({"min": value.to_string(), "unit": unit})
}

fn term_json(code: usize, name: &str, level: &str) -> Value {
    json!({"veddra_term_code": code.to_string(), "veddra_term_name": name, "veddra_level": level})
}

/// Stable numeric code for the `j`-th lower-level term of HLT `h`.
fn llt_code(lethal: bool, h: usize, j: usize) -> usize {
    if lethal {
        20000 + 10 * h + j
    } else {
        10000 + 10 * h + j
    }
}

fn report(params: &SynthParams, i: usize, quarter: usize) -> (Value, Truth) {
    let rng = &mut stream(derive(params.seed, "synth-report"), i as u64);
    let key = format!("SYN-{:06}", i + 1);
    let sp = pick_species(rng);
    let years = rng.gen_range(0.1..sp.max_age_years);
    let kg = rng.gen_range(sp.weight_kg.0..sp.weight_kg.1) * (0.5 + 0.5 * years / sp.max_age_years).min(1.0);

    let mut animal = serde_json::Map::new();
    animal.insert("species".into(), json!(sp.name));
    if rng.gen::<f64>() >= params.p_missing {
        animal.insert("gender".into(), json!(GENDERS.choose(rng).expect("non-empty")));
    }
    let breed = sp.breeds.choose(rng).expect("non-empty");
    animal.insert("breed".into(), json!({"breed_component": breed}));
    if rng.gen::<f64>() >= params.p_missing {
        animal.insert("age".into(), age_json(rng, years));
    }
    if rng.gen::<f64>() >= params.p_missing {
        animal.insert("weight".into(), weight_json(rng, kg));
    }

    let n_drugs = if rng.gen::<f64>() < 0.25 { 2 } else { 1 };
    let mut drug_idx: Vec<usize> = sp.formulary.choose_multiple(rng, n_drugs).copied().collect();
    drug_idx.sort_unstable();
    let drugs: Vec<Value> = drug_idx
        .iter()
        .map(|&d| {
            let (name, code, _) = INGREDIENTS[d];
            let code = if rng.gen::<f64>() < 0.05 { &code[..5] } else { code };
            json!({
                "active_ingredients": [{"name": name}],
                "brand_name": format!("{name} brand"),
                "dosage_form": FORMS.choose(rng).expect("non-empty"),
                "route": ROUTES.choose(rng).expect("non-empty"),
                "atc_vet_code": code,
            })
        })
        .collect();

    let mut reactions = Vec::new();
    let n_terms = rng.gen_range(1..=4);
    for h in rand::seq::index::sample(rng, BENIGN_TERMS.len(), n_terms) {
        let lls = BENIGN_TERMS[h].2;
        let j = rng.gen_range(0..lls.len());
        reactions.push(term_json(llt_code(false, h, j), lls[j], "LLT"));
    }
    let lethal = rng.gen::<f64>() < params.p_lethal;
    if lethal {
        let h = rng.gen_range(0..LETHAL_TERMS.len());
        let lls = LETHAL_TERMS[h].2;
        let j = rng.gen_range(0..lls.len());
        reactions.push(term_json(llt_code(true, h, j), lls[j], "LLT"));
    }
    let old = years >= params.old_fraction * sp.max_age_years;
    let cardiac = drug_idx.iter().any(|d| CARDIAC.contains(d));
    let latent = if lethal || (old && cardiac) { Latent::Death } else { Latent::Recovered };
    let observed = if rng.gen::<f64>() < params.label_noise {
        match latent {
            Latent::Death => Latent::Recovered,
            Latent::Recovered => Latent::Death,
        }
    } else {
        latent
    };

    let u: f64 = rng.gen();
    let status = if u < params.p_unlabeled {
        if rng.gen::<f64>() < 0.6 { "Ongoing" } else { "Unknown" }
    } else if u < params.p_unlabeled + params.p_euthanized {
        "Euthanized"
    } else {
        match observed {
            Latent::Death => "Died",
            Latent::Recovered if rng.gen::<f64>() < params.p_sequela => "Recovered with Sequela",
            Latent::Recovered => "Recovered/Normal",
        }
    };
    if rng.gen::<f64>() < params.p_lack_of_efficacy {
        reactions.push(json!({"veddra_term_name": LACK_OF_EFFICACY_HLT, "veddra_level": "HLT"}));
    }

    let day = rng.gen_range(0..90);
    let date = chrono::NaiveDate::from_ymd_opt(2023, 1 + 3 * quarter as u32, 1).expect("valid date")
        + chrono::Days::new(day);
    let v = json!({
        "unique_aer_id_number": key,
        "original_receive_date": date.format("%Y%m%d").to_string(),
        "animal": Value::Object(animal),
        "drug": drugs,
        "reaction": reactions,
        "outcome": [{"medical_status": status, "number_of_animals_affected": "1"}],
    });
    (v, Truth { key, latent, status })
}

fn veddra_tsv() -> String {
    let mut out = String::from("term\thlt\tsoc\n");
    for (lethal, table) in [(false, &BENIGN_TERMS[..]), (true, &LETHAL_TERMS[..])] {
        for (h, (hlt, soc, lls)) in table.iter().enumerate() {
            for j in 0..lls.len() {
                let _ = writeln!(out, "{}\t{hlt}\t{soc}", llt_code(lethal, h, j));
            }
        }
    }
    out
}

fn atcvet_tsv() -> String {
    let mut out = String::from("code\tname\n");
    for (code, name) in ATC_NAMES {
        let _ = writeln!(out, "{code}\t{name}");
    }
    out
}

/// Aspirin carries reference values; other rows are plausible but made up,
/// with exact mass tracking molecular weight closely.
fn descriptors_tsv(seed: u64) -> String {
    let mut out = String::from(
        "name\tmolecular_weight\th_bond_acceptors\txlogp3\tatom_stereocenters\tformal_charge\tcovalent_units\texact_mass\n",
    );
    for (i, (name, _, mw)) in INGREDIENTS.iter().enumerate() {
        if *name == "Aspirin" {
            let _ = writeln!(out, "aspirin\t180.16\t4\t1.2\t0\t0\t1\t180.04225873");
            continue;
        }
        let rng = &mut stream(derive(seed, "synth-descriptors"), i as u64);
        let hba = (mw / 60.0).round() + f64::from(rng.gen_range(0..3));
        let xlogp = round_to(rng.gen_range(-1.5..6.0), 1);
        let stereo = rng.gen_range(0..4);
        let charge = if rng.gen::<f64>() < 0.1 { 1 } else { 0 };
        let units = if rng.gen::<f64>() < 0.15 { 2 } else { 1 };
        let exact = round_to(mw * (1.0 - rng.gen_range(0.0005..0.0015)), 4);
        let _ = writeln!(
            out,
            "{}\t{mw}\t{hba}\t{xlogp}\t{stereo}\t{charge}\t{units}\t{exact}",
            name.to_lowercase()
        );
    }
    out
}

/// Builds the corpus and the per-report ground truth.
pub fn generate(params: &SynthParams) -> (Corpus, Vec<Truth>) {
    let per_quarter = params.n_reports.div_ceil(params.n_quarters.max(1));
    let mut quarters = Vec::new();
    let mut truth = Vec::with_capacity(params.n_reports);
    for q in 0..params.n_quarters {
        let lo = q * per_quarter;
        let hi = ((q + 1) * per_quarter).min(params.n_reports);
        let mut results = Vec::with_capacity(hi.saturating_sub(lo));
        for i in lo..hi {
            let (v, t) = report(params, i, q);
            results.push(v);
            truth.push(t);
        }
        let doc = json!({
            "meta": {"disclaimer": "Synthetic data.", "results": {"skip": 0, "limit": results.len(), "total": results.len()}},
            "results": results,
        });
        let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
        quarters.push((format!("2023q{}.json", q + 1), text));
    }
    let corpus = Corpus {
        quarters,
        veddra_tsv: veddra_tsv(),
        atcvet_tsv: atcvet_tsv(),
        descriptors_tsv: descriptors_tsv(params.seed),
    };
    (corpus, truth)
}

/// Writes the corpus into `dir`: quarterly files (gzip-compressed when
/// `gzip` is set) under `dir/json`, and the three tables beside it.
pub fn write_corpus(corpus: &Corpus, dir: &std::path::Path, gzip: bool) -> std::io::Result<()> {
    use std::io::Write;
    let json_dir = dir.join("json");
    std::fs::create_dir_all(&json_dir)?;
    for (name, text) in &corpus.quarters {
        if gzip {
            let f = std::fs::File::create(json_dir.join(format!("{name}.gz")))?;
            let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::best());
            enc.write_all(text.as_bytes())?;
            enc.finish()?;
        } else {
            std::fs::write(json_dir.join(name), text)?;
        }
    }
    std::fs::write(dir.join("veddra_hlt.tsv"), &corpus.veddra_tsv)?;
    std::fs::write(dir.join("atcvet_subgroups.tsv"), &corpus.atcvet_tsv)?;
    std::fs::write(dir.join("descriptors.tsv"), &corpus.descriptors_tsv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonize::{merge_reports, VeddraMap};
    use crate::ingest::{parse_quarter, MedicalStatus, TableProvider};
    use std::path::Path;

    fn small() -> SynthParams {
        SynthParams {
            n_reports: 400,
            n_quarters: 2,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let (a, _) = generate(&small());
        let (b, _) = generate(&small());
        assert_eq!(a.quarters, b.quarters);
        assert_eq!(a.descriptors_tsv, b.descriptors_tsv);
    }

    #[test]
    fn parses_and_maps_cleanly() {
        let (c, truth) = generate(&small());
        let mut tables = crate::ingest::RawTables::default();
        for (_, text) in &c.quarters {
            let q = parse_quarter(text).unwrap();
            assert!(q.skipped.is_empty(), "{:?}", q.skipped.first());
            tables.extend(q.tables);
        }
        assert_eq!(tables.main.len(), 400);
        assert_eq!(truth.len(), 400);
        let veddra = VeddraMap::from_tsv_str(&c.veddra_tsv, Path::new("v")).unwrap();
        let provider = TableProvider::from_tsv_str(&c.descriptors_tsv, Path::new("d")).unwrap();
        assert_eq!(provider.len(), INGREDIENTS.len());
        crate::harmonize::AtcvetIndex::from_tsv_str(&c.atcvet_tsv, Path::new("a")).unwrap();
        let names: Vec<&str> = tables.drugs.iter().map(|d| d.ingredient_name.as_str()).collect();
        let desc = crate::ingest::descriptors::resolve_all(names, &provider).unwrap();
        let merged = merge_reports(&tables, &veddra, &desc).unwrap();
        assert_eq!(merged.stats.terms_unmapped, 0);
        assert_eq!(merged.stats.ingredients_without_descriptors, 0);
        assert!(merged.stats.atc_invalid.is_empty());
        let died = merged.reports.iter().filter(|r| r.outcome == MedicalStatus::Died).count();
        assert!(died > 20 && died < 120, "{died}");
    }

    #[test]
    fn every_species_is_in_the_default_group_map() {
        let groups = crate::explain::SpeciesGroupMap::default();
        for s in &SPECIES {
            groups.group_of(s.name).unwrap();
        }
        let total: f64 = SPECIES.iter().map(|s| s.share).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
