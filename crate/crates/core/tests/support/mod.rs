//! Fixture generators shared by the integration tests.
//!
//! Every committed file under `tests/fixtures` that is not a transcription is
//! produced here from a fixed seed. `REGENERATE_FIXTURES=1` rewrites them.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration as ChronoDuration, TimeZone, Utc};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use methodscan::categorize::Decision;
use methodscan::gateway::{request_id, ModelEndpoint, Stage, TimingEntry, TimingLog};
use methodscan::keywords::{CONSOLIDATION_QUERY, EXTRACTION_QUERY};
use methodscan::prompts::{bindings, PromptRegistry, TemplateId};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn regenerate() -> bool {
    std::env::var("REGENERATE_FIXTURES").is_ok_and(|v| v == "1")
}

/// Compare `path` with `expected`, or overwrite it when regenerating.
pub fn check_file(path: &Path, expected: &[u8]) -> Result<(), String> {
    if regenerate() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, expected).unwrap();
        return Ok(());
    }
    match std::fs::read(path) {
        Ok(actual) if actual == expected => Ok(()),
        Ok(_) => Err(format!("{} differs from its generator", path.display())),
        Err(e) => Err(format!("{}: {e}", path.display())),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn csv_string<T: serde::Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

// ---------------------------------------------------------------- bibliography

pub const BIB_FILES: usize = 5;
pub const BIB_UNIQUE: usize = 364;
pub const BIB_ENTRIES: usize = 991;

const TITLE_WORDS: &[&str] = &[
    "automated",
    "species",
    "identification",
    "acoustic",
    "monitoring",
    "camera",
    "trap",
    "images",
    "forest",
    "canopy",
    "mapping",
    "remote",
    "sensing",
    "bird",
    "detection",
    "coral",
    "reef",
    "classification",
    "plankton",
    "imagery",
    "wildlife",
    "population",
    "estimation",
    "satellite",
    "vegetation",
    "phenology",
    "insect",
    "counting",
    "marine",
    "mammal",
    "drone",
    "surveys",
    "land",
    "cover",
    "change",
    "herbarium",
    "specimens",
];

const TITLE_TERMS: &[&str] = &[
    "deep learning",
    "convolutional neural networks",
    "{CNN}",
    "transfer learning",
    "{LSTM} networks",
    "vision transformers",
    "random forests",
    "{YOLO}",
    "semantic segmentation",
    "machine learning",
];

pub fn bibliography_dois() -> Vec<String> {
    let mut r = rng(0x5eed_0001);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < BIB_UNIQUE {
        let year = r.random_range(2016..=2024);
        let doi = format!("10.1016/j.ecoinf.{year}.{}", r.random_range(100_000..103_000));
        if seen.insert(doi.clone()) {
            out.push(doi);
        }
    }
    out
}

fn doi_variant(r: &mut ChaCha8Rng, doi: &str) -> String {
    match r.random_range(0..6) {
        0 | 1 => doi.to_string(),
        2 => doi.to_uppercase(),
        3 => format!("https://doi.org/{doi}"),
        4 => format!("doi:{doi}"),
        _ => format!("http://dx.doi.org/{}", doi.to_uppercase()),
    }
}

fn title(r: &mut ChaCha8Rng) -> String {
    let n = r.random_range(3..7);
    let mut words: Vec<String> = (0..n)
        .map(|_| TITLE_WORDS[r.random_range(0..TITLE_WORDS.len())].to_string())
        .collect();
    words[0] = capitalize(&words[0]);
    let term = TITLE_TERMS[r.random_range(0..TITLE_TERMS.len())];
    format!("{} using {term}", words.join(" "))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn bib_entry(r: &mut ChaCha8Rng, key: &str, doi: &str) -> String {
    let year = doi.split('.').nth(3).unwrap_or("2020").to_string();
    let t = title(r);
    let doi = doi_variant(r, doi);
    let ty = if r.random_bool(0.2) { "ARTICLE" } else { "article" };
    let journal = if r.random_bool(0.5) {
        "journal = eco".to_string()
    } else {
        "journal = {Ecological Informatics}".to_string()
    };
    let title_field = if r.random_bool(0.3) {
        format!("title = \"{t}\"")
    } else {
        format!("title = {{{t}}}")
    };
    let mut fields = vec![
        title_field,
        format!("author = {{Author, A. and Writer, B.}}"),
        journal,
        format!("year = {year}"),
        format!("doi = {{{doi}}}"),
        format!("volume = {{{}}}", r.random_range(30..80)),
        format!("pages = {{{}}}", r.random_range(100_000..103_000)),
    ];
    fields[1..].shuffle(r);
    let mut s = format!("@{ty}{{{key},\n");
    for f in &fields {
        let _ = writeln!(s, "  {f},");
    }
    s.push_str("}\n");
    s
}

/// Five query exports with overlapping results, as (file name, contents).
pub fn bibliography_files() -> Vec<(String, String)> {
    let dois = bibliography_dois();
    let mut r = rng(0x5eed_0002);
    let mut counts = vec![1usize; BIB_UNIQUE];
    let mut extra = BIB_ENTRIES - BIB_UNIQUE;
    while extra > 0 {
        let i = r.random_range(0..BIB_UNIQUE);
        if counts[i] < BIB_FILES {
            counts[i] += 1;
            extra -= 1;
        }
    }
    let mut per_file: Vec<Vec<&str>> = vec![Vec::new(); BIB_FILES];
    for (doi, &c) in dois.iter().zip(&counts) {
        for f in index::sample(&mut r, BIB_FILES, c) {
            per_file[f].push(doi);
        }
    }
    per_file
        .into_iter()
        .enumerate()
        .map(|(f, mut list)| {
            list.shuffle(&mut r);
            let mut text = format!(
                "@comment{{Scopus export, query set {}}}\n\n@string{{eco = \"Ecological Informatics\"}}\n\n",
                f + 1
            );
            for (k, doi) in list.iter().enumerate() {
                text.push_str(&bib_entry(&mut r, &format!("q{}e{k:03}", f + 1), doi));
                text.push('\n');
            }
            (format!("query{}.bib", f + 1), text)
        })
        .collect()
}

// ------------------------------------------------------------- mini corpus

pub const MINI_DOIS: [&str; 3] = [
    "10.1016/j.ecoinf.2024.000101",
    "10.1016/j.ecoinf.2024.000202",
    "10.1016/j.ecoinf.2024.000303",
];

pub const MINI_ENDPOINTS: [&str; 5] = [
    "Mixtral 8x22B Instruct v0.1",
    "Mixtral 8x7B",
    "Llama 3.1 70B",
    "Llama 3 70B",
    "Gemma 2 9B",
];

const FILLER: &[&str] = &[
    "Biodiversity loss is accelerating across many regions and reliable monitoring data are needed to guide conservation action.",
    "The study area covers a mosaic of protected forest, agricultural land and small settlements.",
    "Field teams visited each site at regular intervals between spring and late autumn.",
    "Long-term records allow managers to compare current observations with historical baselines.",
    "Local stakeholders contributed knowledge about access routes and seasonal conditions.",
    "Weather conditions during the survey period were close to the regional average.",
    "Sampling effort was balanced across habitat types to limit spatial bias.",
    "All data handling followed the institutional guidelines for ecological research.",
    "The results are discussed in the context of regional conservation priorities.",
    "Observations were stored in a central database with standardized metadata fields.",
    "Several sites were difficult to reach after heavy rain, which reduced coverage in some weeks.",
    "The protected area management plan lists these species as priorities for monitoring.",
    "Previous surveys in the region relied mainly on manual observation by experts.",
    "Costs of large monitoring programmes remain a barrier for many agencies.",
    "We thank the rangers and volunteers who supported the fieldwork.",
    "Data collection permits were granted by the regional environment agency.",
    "The landscape has changed considerably over the past three decades.",
    "Seasonal patterns in species activity are well documented for temperate systems.",
];

struct MiniPub {
    title: &'static str,
    abstract_text: &'static str,
    methods: &'static [&'static str],
}

const MINI_PUBS: [MiniPub; 3] = [
    MiniPub {
        title: "Camera trap image classification with convolutional neural networks",
        abstract_text: "We classify mammals in camera trap images with a convolutional neural network and transfer learning. \
Object detection isolates animals before classification and the model reaches high accuracy.",
        methods: &[
            "Raw data were collected with 120 camera traps deployed on a regular grid and triggered by passive infrared sensors.",
            "The images are stored as JPEG files with a resolution of 1920 by 1080 pixels.",
            "Each image was annotated with bounding box annotation around every visible animal using a web labelling tool.",
            "Data augmentation included random flipping, rotating and scaling of the cropped animals.",
            "We combined our images with the public Snapshot Serengeti dataset and a subset of ImageNet for pretraining.",
            "Preprocessing steps included normalization of pixel values, resizing to 224 pixels and cleaning of empty frames.",
            "The data were split into train, test and validation sets with a ratio of 70, 15 and 15 percent by camera site.",
            "The code is available in a GitHub repository at https://github.com/example/camtrap-cnn.",
            "The image data are deposited on Zenodo at https://zenodo.org/record/1234567.",
            "We used a ResNet-50 convolutional neural network architecture with a new classification head.",
            "Hyperparameters were a learning rate of 0.001, batch size 32 and the Adam optimizer.",
            "Hyperparameters were optimized by grid search over learning rate and weight decay values.",
            "The network was trained for 50 epochs with stochastic gradient descent as a baseline and Adam as the final optimizer.",
            "Training stopped when the validation loss plateau lasted for five epochs.",
            "Dropout and L2 regularization were applied to prevent overfitting.",
            "Model performance was monitored during training by tracking validation accuracy after every epoch.",
            "The model was implemented in PyTorch with the torchvision library.",
            "Training used two NVIDIA A100 GPUs on a university cluster.",
            "After training, saliency maps and a confusion matrix were computed for every class.",
            "Performance was evaluated with accuracy, precision, recall and F1 score.",
            "Cross-validation across camera sites was used to assess generalizability of the model.",
            "A fixed random seed value of 42 was set for all experiments.",
            "Oversampling of rare species addressed class imbalance and data bias during preprocessing.",
            "The trained model was serialized to ONNX for deployment on edge devices.",
            "The deep learning model was deployed on the Google Cloud platform for the monitoring agency.",
            "The purpose of the deep learning model is classification of species in camera trap images.",
        ],
    },
    MiniPub {
        title: "Recurrent networks for bird song detection in passive acoustic recordings",
        abstract_text: "Passive acoustic monitoring produces large audio archives. \
We detect bird songs in spectrograms with a recurrent neural network and compare it to a transformer.",
        methods: &[
            "Audio was recorded with autonomous sound recorders placed at forty wetland sites.",
            "Recordings were stored as WAV audio files and converted to mel spectrograms.",
            "Experts annotated the start and end time of every song in the spectrogram viewer.",
            "Data augmentation mixed background noise into clean recordings and shifted calls in time.",
            "The labelled dataset combines our recordings with the public BirdCLEF dataset.",
            "Before training the spectrograms were normalized per frequency band.",
            "Recordings were split by site into train, test and validation sets.",
            "We used a recurrent neural network with two bidirectional LSTM layers followed by a dense layer.",
            "The network was trained with a learning rate of 0.0005 and the Adam optimizer for 80 epochs.",
            "Early stopping ended training when validation loss did not improve for ten epochs.",
            "Dropout between recurrent layers reduced overfitting.",
            "Training and validation loss were logged to monitor model performance during training.",
            "The model was built in TensorFlow and Keras.",
            "Training ran on a single NVIDIA RTX 3090 GPU.",
            "We report precision, recall and the area under the precision recall curve as metrics.",
            "Detections were post processed with a median filter and metrics calculation per site.",
            "The purpose of the deep learning model is detection of bird songs in long recordings.",
        ],
    },
    MiniPub {
        title: "Habitat suitability of amphibians from occurrence records and climate layers",
        abstract_text: "We model habitat suitability for twelve amphibian species from occurrence records. \
Random forest and MaxEnt models are compared using climate and land cover predictors.",
        methods: &[
            "Occurrence records were downloaded from GBIF and cleaned for duplicates and spatial errors.",
            "Climate predictors came from WorldClim at a resolution of 30 arc seconds.",
            "Land cover layers were derived from Sentinel-2 composites.",
            "We fitted random forest and MaxEnt models with default settings in R.",
            "Model performance was assessed with the area under the receiver operating curve on held out records.",
            "Spatial block cross-checking reduced optimistic bias from autocorrelated records.",
            "Variable importance was computed from permutation tests.",
            "Future studies could explore deep learning methods once more occurrence data become available.",
            "Maps of habitat suitability were shared with the regional conservation office.",
        ],
    },
];

fn compose_text(r: &mut ChaCha8Rng, p: &MiniPub, words_target: usize) -> String {
    let mut paragraphs = vec![p.title.to_string(), format!("Abstract. {}", p.abstract_text)];
    let mut words = paragraphs.iter().map(|s| s.split_whitespace().count()).sum::<usize>();
    let mut methods = p.methods.iter();
    let mut pending_methods = true;
    while words < words_target || pending_methods {
        let mut para = Vec::new();
        for _ in 0..r.random_range(2..5) {
            para.push(FILLER[r.random_range(0..FILLER.len())]);
        }
        for _ in 0..r.random_range(1..3) {
            match methods.next() {
                Some(m) => para.insert(r.random_range(0..=para.len()), m),
                None => pending_methods = false,
            }
        }
        let text = para.join(" ");
        words += text.split_whitespace().count();
        paragraphs.push(text);
    }
    let mut out = paragraphs.join("\n\n");
    out.push('\n');
    out
}

/// Bibliography and full texts for the three-publication corpus.
pub fn mini_corpus_files() -> Vec<(String, String)> {
    let mut r = rng(0x5eed_0003);
    let mut bib = String::from("@comment{three publications, one exported twice, one record without DOI}\n\n");
    for (i, (doi, p)) in MINI_DOIS.iter().zip(&MINI_PUBS).enumerate() {
        let _ = write!(
            bib,
            "@article{{mini{i},\n  title = {{{}}},\n  journal = {{Ecological Informatics}},\n  year = 2024,\n  doi = {{{doi}}}\n}}\n\n",
            p.title
        );
    }
    let _ = write!(
        bib,
        "@article{{mini0dup,\n  title = {{{}}},\n  year = 2024,\n  doi = {{https://doi.org/{}}}\n}}\n\n",
        MINI_PUBS[0].title,
        MINI_DOIS[0].to_uppercase()
    );
    bib.push_str("@misc{nodoi,\n  title = {A dataset description without identifier},\n  year = 2023\n}\n");
    let mut files = vec![("refs.bib".to_string(), bib)];
    for (i, (doi, p)) in MINI_DOIS.iter().zip(&MINI_PUBS).enumerate() {
        let target = [1800, 1400, 1100][i];
        files.push((methodscan::corpus::text_file_name(doi), compose_text(&mut r, p, target)));
    }
    files
}

pub fn mini_abstract_files() -> Vec<(String, String)> {
    MINI_PUBS
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("abstract_{}.txt", i + 1), format!("{}\n", p.abstract_text)))
        .collect()
}

pub fn mini_config() -> String {
    let mut s = String::from(
        "parallelism = 4\ntie_rule = \"no\"\nfilter_endpoint = \"Llama 3.1 70B\"\nretrieval_budget = 1200\n\n\
[chunking]\nchunk_size = 1000\nchunk_overlap = 50\n\n\
[keywords]\nabstracts = \"abstracts\"\n\n\
[evaluation]\nannotations = \"annotations.csv\"\nreference = \"reference.csv\"\n\n",
    );
    let hardware = ["NVIDIA H100 (94 GB)", "Intel Xeon Platinum 9242"];
    for (i, name) in MINI_ENDPOINTS.iter().enumerate() {
        let _ = write!(
            s,
            "[[endpoints]]\nname = \"{name}\"\nbase_url = \"http://localhost:8000/v1\"\nmodel_id = \"{}\"\napi_key_env = \"LLM_API_KEY\"\nhardware = \"{}\"\n\n",
            name.to_lowercase().replace(' ', "-"),
            hardware[(i > 0) as usize]
        );
    }
    s.push_str(
        "[[hardware_profiles]]\nname = \"NVIDIA H100 (94 GB)\"\ncores = 1\npower_per_core = 350.0\nmemory = 94.0\n\n\
[[hardware_profiles]]\nname = \"Intel Xeon Platinum 9242\"\ncores = 48\npower_per_core = 7.29\n",
    );
    s
}

/// Human judgments of every endpoint's verdicts.
pub fn mini_annotations() -> String {
    let mut r = rng(0x5eed_0004);
    let mut rows = Vec::new();
    for ep in MINI_ENDPOINTS {
        for doi in MINI_DOIS {
            for q in 1..=28u32 {
                let label = if r.random_bool(0.6) { "Yes" } else { "No" };
                rows.push((ep, doi, q, label));
            }
        }
    }
    let mut out = String::from("endpoint,doi,cq_id,label\n");
    for (ep, doi, q, l) in rows {
        let _ = writeln!(out, "{ep},{doi},{q},{l}");
    }
    out
}

pub fn mini_reference() -> String {
    let mut r = rng(0x5eed_0005);
    let mut out = String::from("doi,variable,label\n");
    for doi in MINI_DOIS {
        for (_, var) in methodscan::metrics::DEFAULT_VARIABLE_MAPPING {
            let label = if r.random_bool(0.5) { "yes" } else { "no" };
            let _ = writeln!(out, "{doi},{var},{label}");
        }
    }
    out
}

// ------------------------------------------------------- published-count stores

pub const COVERAGE_BEFORE: [usize; 28] = [
    215, 333, 61, 76, 152, 145, 141, 23, 27, 20, 18, 275, 124, 76, 122, 75, 101, 205, 101, 101, 131, 340, 174, 60, 345,
    59, 7, 17,
];
pub const COVERAGE_AFTER: [usize; 28] = [
    109, 232, 55, 69, 134, 92, 102, 18, 16, 17, 12, 235, 104, 37, 111, 64, 85, 129, 94, 95, 80, 225, 115, 42, 247, 41,
    6, 8,
];
pub const PUBLICATIONS: usize = 464;
pub const RETAINED: usize = 257;
/// Agreements per mapped variable, in mapping order.
pub const REFERENCE_AGREEMENTS: [usize; 6] = [63, 74, 53, 89, 63, 75];

/// (endpoint, agreements out of 840, kappa printed to four places)
pub const HUMAN_AGREEMENT: [(&str, usize, &str); 5] = [
    ("Mixtral 8x22B Instruct v0.1", 667, "0.5711"),
    ("Mixtral 8x7B", 666, "0.5583"),
    ("Llama 3.1 70B", 735, "0.7221"),
    ("Llama 3 70B", 752, "0.7708"),
    ("Gemma 2 9B", 746, "0.7128"),
];

/// (endpoint, hardware, rag minutes, categorize minutes)
pub const RUNTIMES: [(&str, &str, u64, Option<u64>); 6] = [
    (
        "Mixtral 8x22B Instruct v0.1 (H100)",
        "NVIDIA H100 (94 GB)",
        71 * 60 + 3,
        Some(6 * 60 + 34),
    ),
    (
        "Mixtral 8x22B Instruct v0.1 (A100)",
        "NVIDIA A100 (2x80 GB)",
        69 * 60 + 10,
        None,
    ),
    (
        "Mixtral 8x7B",
        "Intel Xeon Platinum 9242",
        63 * 60 + 32,
        Some(40 * 60 + 39),
    ),
    (
        "Llama 3.1 70B",
        "Intel Xeon Platinum 9242",
        5 * 60 + 52,
        Some(9 * 60 + 31),
    ),
    (
        "Llama 3 70B",
        "Intel Xeon Platinum 9242",
        38 * 60 + 36,
        Some(22 * 60 + 28),
    ),
    ("Gemma 2 9B", "Intel Xeon Platinum 9242", 16 * 60 + 2, Some(8 * 60 + 49)),
];

/// The 364 searched publications plus the 100 of the earlier manual study.
pub fn published_dois() -> Vec<String> {
    let mut dois = bibliography_dois();
    dois.extend(previous_study_dois());
    dois
}

pub fn previous_study_dois() -> Vec<String> {
    (0..100)
        .map(|i| format!("10.1016/j.ecoinf.2022.{:06}", 900_000 + i * 37))
        .collect()
}

fn kept_mask(r: &mut ChaCha8Rng) -> Vec<bool> {
    let mut kept = vec![false; PUBLICATIONS];
    for i in index::sample(r, PUBLICATIONS, RETAINED) {
        kept[i] = true;
    }
    kept
}

/// (votes.csv, filter.csv, reference.csv)
pub fn published_vote_stores() -> (String, String, String) {
    let dois = published_dois();
    let mut r = rng(0x5eed_0006);
    let kept = kept_mask(&mut r);
    let kept_idx: Vec<usize> = (0..PUBLICATIONS).filter(|&i| kept[i]).collect();
    let dropped_idx: Vec<usize> = (0..PUBLICATIONS).filter(|&i| !kept[i]).collect();
    let mut yes = vec![[false; 28]; PUBLICATIONS];
    for q in 0..28 {
        for i in index::sample(&mut r, kept_idx.len(), COVERAGE_AFTER[q]) {
            yes[kept_idx[i]][q] = true;
        }
        for i in index::sample(&mut r, dropped_idx.len(), COVERAGE_BEFORE[q] - COVERAGE_AFTER[q]) {
            yes[dropped_idx[i]][q] = true;
        }
    }
    let mut order: Vec<usize> = (0..PUBLICATIONS).collect();
    order.sort_by(|a, b| dois[*a].cmp(&dois[*b]));
    let mut votes = String::from("doi,cq_id,yes_count,no_count,decision\n");
    for &p in &order {
        for q in 0..28 {
            let y = if yes[p][q] {
                r.random_range(3..=5)
            } else {
                r.random_range(0..=2)
            };
            let d = if yes[p][q] { "Yes" } else { "No" };
            let _ = writeln!(votes, "{},{},{y},{},{d}", dois[p], q + 1, 5 - y);
        }
    }
    let mut filter = String::from("doi,is_dl_study,endpoint\n");
    for &p in &order {
        let _ = writeln!(filter, "{},{},Llama 3.1 70B", dois[p], kept[p]);
    }
    let mut reference = String::from("doi,variable,label\n");
    let prev_start = PUBLICATIONS - 100;
    for (v, (cq, var)) in methodscan::metrics::DEFAULT_VARIABLE_MAPPING.iter().enumerate() {
        let agree: std::collections::HashSet<usize> = index::sample(&mut r, 100, REFERENCE_AGREEMENTS[v])
            .into_iter()
            .collect();
        for k in 0..100 {
            let p = prev_start + k;
            let decided = yes[p][*cq as usize - 1];
            let label = decided == agree.contains(&k);
            let _ = writeln!(reference, "{},{var},{}", dois[p], if label { "Yes" } else { "No" });
        }
    }
    (votes, filter, reference)
}

/// Integer kappa numerator and denominator for a confusion matrix.
fn kappa(yy: i64, yn: i64, ny: i64, nn: i64) -> Option<f64> {
    let n = yy + yn + ny + nn;
    let chance = (yy + yn) * (yy + ny) + (ny + nn) * (yn + nn);
    let d = n * n - chance;
    (d != 0).then(|| (n * (yy + nn) - chance) as f64 / d as f64)
}

/// A confusion matrix over `n` items with `agree` matches whose kappa prints
/// as `target`; the most balanced off-diagonal wins.
pub fn confusion_for(n: i64, agree: i64, target: &str) -> Option<[i64; 4]> {
    let mut best: Option<(i64, [i64; 4])> = None;
    for yy in 0..=agree {
        let nn = agree - yy;
        for yn in 0..=(n - agree) {
            let ny = n - agree - yn;
            if kappa(yy, yn, ny, nn).is_some_and(|k| format!("{k:.4}") == target) {
                let cost = (yn - ny).abs() * 1000 + (yy - n / 3).abs();
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, [yy, yn, ny, nn]));
                }
            }
        }
    }
    best.map(|b| b.1)
}

/// (verdicts.csv, annotations.csv) over 30 publications × 28 CQs per model.
pub fn published_human_stores() -> (String, String) {
    let dois = published_dois();
    let mut r = rng(0x5eed_0007);
    let mut picked: Vec<&String> = index::sample(&mut r, dois.len(), 30)
        .into_iter()
        .map(|i| &dois[i])
        .collect();
    picked.sort();
    let keys: Vec<(&str, u32)> = picked
        .iter()
        .flat_map(|d| (1..=28).map(move |q| (d.as_str(), q)))
        .collect();
    let mut verdict_rows = Vec::new();
    let mut annotation_rows = Vec::new();
    for (ep, agree, target) in HUMAN_AGREEMENT {
        let [yy, yn, ny, nn] = confusion_for(840, agree as i64, target).expect("a matching confusion matrix exists");
        let mut pairs = Vec::new();
        for (count, pair) in [
            (yy, ("Yes", "Yes")),
            (yn, ("Yes", "No")),
            (ny, ("No", "Yes")),
            (nn, ("No", "No")),
        ] {
            pairs.extend(std::iter::repeat_n(pair, count as usize));
        }
        pairs.shuffle(&mut r);
        for ((doi, q), (model, human)) in keys.iter().zip(pairs) {
            verdict_rows.push((doi.to_string(), *q, ep, model));
            annotation_rows.push((ep, doi.to_string(), *q, human));
        }
    }
    verdict_rows.sort();
    let mut verdicts = String::from("doi,cq_id,endpoint,verdict\n");
    for (doi, q, ep, v) in verdict_rows {
        let _ = writeln!(verdicts, "{doi},{q},{ep},{v}");
    }
    let mut annotations = String::from("endpoint,doi,cq_id,label\n");
    for (ep, doi, q, l) in annotation_rows {
        let _ = writeln!(annotations, "{ep},{doi},{q},{l}");
    }
    (verdicts, annotations)
}

fn slug(s: &str) -> String {
    s.chars()
        .filter_map(|c| {
            if c.is_ascii_alphanumeric() {
                Some(c.to_ascii_lowercase())
            } else if c == ' ' || c == '.' {
                Some('-')
            } else {
                None
            }
        })
        .collect()
}

/// Splits `total` into `parts` positive values.
fn split_total(r: &mut ChaCha8Rng, total: u64, parts: usize) -> Vec<u64> {
    let weights: Vec<u64> = (0..parts).map(|_| r.random_range(500..1500)).collect();
    let sum: u64 = weights.iter().sum();
    let mut out: Vec<u64> = weights.iter().map(|w| total * w / sum).collect();
    let short = total - out.iter().sum::<u64>();
    for v in out.iter_mut().take(short as usize) {
        *v += 1;
    }
    out
}

pub fn timing_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 8, 1, 0, 0, 0).unwrap()
}

/// Per-publication timing rows whose deduplicated sums hit `RUNTIMES` (and
/// their column totals) to the minute, with
/// superseded earlier attempts mixed in.
pub fn published_timing_log() -> TimingLog {
    let dois = published_dois();
    let mut r = rng(0x5eed_0008);
    let mut entries = Vec::new();
    for (ep, _, rag, cat) in RUNTIMES {
        for (stage, minutes) in [(Stage::Rag, Some(rag)), (Stage::Categorize, cat)] {
            let Some(minutes) = minutes else { continue };
            let total = minutes * 60_000 + r.random_range(0..4_000);
            let mut at = timing_epoch() + ChronoDuration::days(r.random_range(0..20));
            for (i, ms) in split_total(&mut r, total, PUBLICATIONS).into_iter().enumerate() {
                let id = format!("{}-{}-{i:04}", stage, slug(ep));
                if r.random_bool(0.05) {
                    entries.push(TimingEntry {
                        unique_id: id.clone(),
                        doi: dois[i].clone(),
                        endpoint: ep.to_string(),
                        stage,
                        duration_ms: r.random_range(1_000..600_000),
                        timestamp: at - ChronoDuration::hours(r.random_range(1..48)),
                    });
                }
                at += ChronoDuration::milliseconds(ms as i64);
                entries.push(TimingEntry {
                    unique_id: id,
                    doi: dois[i].clone(),
                    endpoint: ep.to_string(),
                    stage,
                    duration_ms: ms,
                    timestamp: at,
                });
            }
        }
    }
    entries.shuffle(&mut r);
    TimingLog::new(entries)
}

pub fn published_config() -> String {
    let mut s = String::from("filter_endpoint = \"Llama 3.1 70B\"\n\n");
    for (ep, hw, _, _) in RUNTIMES {
        let _ = write!(s, "[[endpoints]]\nname = \"{ep}\"\nhardware = \"{hw}\"\n\n");
    }
    s.push_str(
        "[[hardware_profiles]]\nname = \"NVIDIA H100 (94 GB)\"\ncores = 1\npower_per_core = 350.0\n\n\
[[hardware_profiles]]\nname = \"NVIDIA A100 (2x80 GB)\"\ncores = 2\npower_per_core = 300.0\n\n\
[[hardware_profiles]]\nname = \"Intel Xeon Platinum 9242\"\ncores = 48\npower_per_core = 7.29\n",
    );
    s
}

// ---------------------------------------------------------- keyword funnel

pub const ABSTRACTS: usize = 44;
pub const RAW_KEYWORDS: usize = 248;
pub const CONSOLIDATED_KEYWORDS: usize = 123;

pub const DL_TERMS: &[&str] = &[
    "convolutional neural network",
    "recurrent neural network",
    "long short-term memory",
    "transformer",
    "vision transformer",
    "graph neural network",
    "generative adversarial network",
    "variational autoencoder",
    "autoencoder",
    "residual network",
    "u-net",
    "yolo",
    "faster r-cnn",
    "mask r-cnn",
    "resnet",
    "vgg",
    "inception",
    "mobilenet",
    "efficientnet",
    "densenet",
    "bert",
    "gpt",
    "large language model",
    "multilayer perceptron",
    "capsule network",
    "siamese network",
    "attention mechanism",
    "self-attention",
    "encoder-decoder",
    "diffusion model",
    "image classification",
    "object detection",
    "semantic segmentation",
    "instance segmentation",
    "species identification",
    "sound event detection",
    "image captioning",
    "named entity recognition",
    "relation extraction",
    "optical character recognition",
    "pose estimation",
    "anomaly detection",
    "few-shot classification",
    "image retrieval",
    "text classification",
    "deep learning",
    "machine learning",
    "transfer learning",
    "fine-tuning",
    "data augmentation",
    "self-supervised learning",
    "semi-supervised learning",
    "unsupervised learning",
    "supervised learning",
    "active learning",
    "contrastive learning",
    "reinforcement learning",
    "federated learning",
    "knowledge distillation",
    "ensemble learning",
    "multi-task learning",
    "domain adaptation",
    "meta-learning",
    "zero-shot learning",
    "representation learning",
    "backpropagation",
    "stochastic gradient descent",
    "adam optimizer",
    "dropout",
    "batch normalization",
    "learning rate schedule",
    "early stopping",
    "cross-entropy loss",
    "weight decay",
    "hyperparameter tuning",
    "gradient boosting",
    "data labeling",
    "model training",
    "pretrained model",
    "feature extraction",
    "embedding",
    "word embedding",
    "tokenization",
    "softmax",
    "activation function",
    "neural network",
    "artificial intelligence",
    "computer vision",
    "natural language processing",
    "bioacoustics classifier",
    "spectrogram classification",
    "image annotation",
    "bounding box",
    "model deployment",
    "edge inference",
    "gpu acceleration",
    "tensorflow",
    "pytorch",
    "keras",
    "onnx",
    "explainable ai",
    "saliency map",
    "grad-cam",
    "model interpretability",
    "uncertainty estimation",
    "label noise",
    "class imbalance",
    "synthetic data",
    "foundation model",
    "multimodal learning",
    "sequence modelling",
    "time series forecasting",
    "clustering",
    "dimensionality reduction",
    "random forest",
    "support vector machine",
    "k-nearest neighbours",
    "decision tree",
    "logistic regression",
    "bayesian neural network",
    "probabilistic model",
    "image segmentation",
    "speech recognition",
];

pub const OTHER_TERMS: &[&str] = &[
    "camera trap",
    "species distribution",
    "citizen science",
    "biodiversity informatics",
    "remote sensing",
    "taxonomy",
    "metadata standard",
    "data portal",
    "occurrence records",
    "herbarium specimens",
    "ontology",
    "linked data",
    "digitization",
    "gbif",
    "darwin core",
    "field survey",
    "acoustic index",
    "image repository",
    "ecological modelling",
    "data paper",
];

/// Keyword lists per abstract: 28 abstracts with six, 16 with five.
fn abstract_keywords(r: &mut ChaCha8Rng) -> Vec<Vec<&'static str>> {
    assert_eq!(DL_TERMS.len(), CONSOLIDATED_KEYWORDS);
    let sizes: Vec<usize> = (0..ABSTRACTS).map(|i| if i < 28 { 6 } else { 5 }).collect();
    loop {
        let mut pool: Vec<&str> = DL_TERMS.iter().chain(OTHER_TERMS).copied().collect();
        while pool.len() < RAW_KEYWORDS {
            pool.push(DL_TERMS[r.random_range(0..DL_TERMS.len())]);
        }
        pool.shuffle(r);
        let mut out = Vec::new();
        let mut it = pool.into_iter();
        for &n in &sizes {
            out.push(it.by_ref().take(n).collect::<Vec<_>>());
        }
        let distinct = out.iter().all(|ks| {
            let mut s = ks.clone();
            s.sort();
            s.dedup();
            s.len() == ks.len()
        });
        if distinct {
            return out;
        }
    }
}

fn display_case(r: &mut ChaCha8Rng, k: &str) -> String {
    match r.random_range(0..4) {
        0 => capitalize(k),
        1 if k.len() <= 5 => k.to_uppercase(),
        _ => k.to_string(),
    }
}

pub const KEYWORD_ENDPOINT: &str = "Mixtral 8x22B Instruct v0.1";

/// Abstracts and canned extraction/consolidation replies, keyed by path
/// relative to the keyword fixture directory.
pub fn keyword_fixture_files() -> Vec<(String, String)> {
    let mut r = rng(0x5eed_0009);
    let lists = abstract_keywords(&mut r);
    let prompts = PromptRegistry::builtin();
    let endpoint = ModelEndpoint::new(KEYWORD_ENDPOINT);
    let mut files = Vec::new();
    let mut raw: Vec<String> = Vec::new();
    for (i, ks) in lists.iter().enumerate() {
        let mut text = format!("Session abstract {}. ", i + 1);
        for k in ks {
            let _ = write!(text, "{} ", FILLER[r.random_range(0..FILLER.len())]);
            let _ = write!(text, "Our contribution discusses {k} for biodiversity data. ");
        }
        let text = format!("{}\n", text.trim_end());
        let prompt = prompts
            .render(
                TemplateId::KeywordExtraction,
                &bindings(&[("query", EXTRACTION_QUERY), ("context", &text)]),
            )
            .unwrap();
        let shown: Vec<String> = ks.iter().map(|k| display_case(&mut r, k)).collect();
        raw.extend(shown.iter().map(|k| k.to_lowercase()));
        files.push((format!("abstracts/abstract_{:02}.txt", i + 1), text));
        files.push((
            format!("mock/{}.txt", request_id(&endpoint.name, &prompt)),
            format!(
                "Answer:::\nDeep learning related words: {}\nAnswer:::",
                shown.join(", ")
            ),
        ));
    }
    let context = raw.join(", ");
    let prompt = prompts
        .render(
            TemplateId::KeywordExtraction,
            &bindings(&[("query", CONSOLIDATION_QUERY), ("context", &context)]),
        )
        .unwrap();
    let mut consolidated: Vec<&str> = DL_TERMS.to_vec();
    consolidated.shuffle(&mut r);
    consolidated.push(consolidated[3]);
    consolidated.push(consolidated[17]);
    files.push((
        format!("mock/{}.txt", request_id(&endpoint.name, &prompt)),
        format!(
            "Answer:::\nDeep learning related words: {}\nAnswer:::",
            consolidated.join(", ")
        ),
    ));
    files.push((
        "config.toml".into(),
        format!(
            "[keywords]\nabstracts = \"abstracts\"\nendpoint = \"{KEYWORD_ENDPOINT}\"\n\n[[endpoints]]\nname = \"{KEYWORD_ENDPOINT}\"\n"
        ),
    ));
    files
}

/// Timing log CSV bytes for the published-count fixture.
pub fn published_timing_csv() -> String {
    published_timing_log().to_csv_string().unwrap()
}

/// Every generated fixture, as (path relative to `tests/fixtures`, bytes).
pub fn generated_fixtures() -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for (name, text) in bibliography_files() {
        out.insert(format!("bibliography/{name}"), text.into_bytes());
    }
    for (name, text) in mini_corpus_files() {
        out.insert(format!("mini/corpus/{name}"), text.into_bytes());
    }
    for (name, text) in mini_abstract_files() {
        out.insert(format!("mini/abstracts/{name}"), text.into_bytes());
    }
    out.insert("mini/config.toml".into(), mini_config().into_bytes());
    out.insert("mini/mock/.gitkeep".into(), Vec::new());
    out.insert("mini/annotations.csv".into(), mini_annotations().into_bytes());
    out.insert("mini/reference.csv".into(), mini_reference().into_bytes());
    let (votes, filter, reference) = published_vote_stores();
    out.insert("published/votes.csv".into(), votes.into_bytes());
    out.insert("published/filter.csv".into(), filter.into_bytes());
    out.insert("published/reference.csv".into(), reference.into_bytes());
    let (verdicts, annotations) = published_human_stores();
    out.insert("published/verdicts.csv".into(), verdicts.into_bytes());
    out.insert("published/annotations.csv".into(), annotations.into_bytes());
    out.insert("published/timing.csv".into(), published_timing_csv().into_bytes());
    out.insert("published/config.toml".into(), published_config().into_bytes());
    for (name, text) in keyword_fixture_files() {
        out.insert(format!("keywords/{name}"), text.into_bytes());
    }
    out
}

pub fn labels(s: &[&str]) -> Vec<Decision> {
    s.iter().map(|x| x.parse().unwrap()).collect()
}

// ------------------------------------------------------------ golden runs

/// Artifacts of a mock `all` run that must not vary between runs.
pub const GOLDEN_FILES: &[&str] = &[
    "corpus/publications.jsonl",
    "keywords/raw.txt",
    "keywords/consolidated.txt",
    "keywords/queries.txt",
    "answers/answers.jsonl",
    "verdicts/verdicts.csv",
    "votes/votes.csv",
    "filters/filter.csv",
    "reports/runtime.csv",
    "reports/coverage.csv",
    "reports/coverage.txt",
    "reports/human_agreement.csv",
    "reports/reference_agreement.csv",
    "reports/similarity.csv",
    "reports/pairwise_kappa.csv",
    "reports/footprint.csv",
];

/// Run every stage on the three-publication corpus and collect the golden
/// artifacts.
pub fn run_mini(workspace: &Path, parallelism: usize) -> BTreeMap<String, Vec<u8>> {
    use methodscan::config::Config;
    use methodscan::pipeline::{Outcome, Pipeline, RunOptions};

    let mini = fixtures().join("mini");
    let config = Config::load(&mini.join("config.toml")).unwrap();
    let opts = RunOptions {
        workspace: workspace.to_path_buf(),
        mock: Some(mini.join("mock")),
        endpoints: None,
        resume: false,
        parallelism: Some(parallelism),
    };
    let pipeline = Pipeline::new(config, &opts).unwrap();
    assert_eq!(pipeline.all(&mini.join("corpus")).unwrap(), Outcome::Done);
    GOLDEN_FILES
        .iter()
        .map(|rel| {
            (
                rel.to_string(),
                std::fs::read(workspace.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}")),
            )
        })
        .collect()
}
