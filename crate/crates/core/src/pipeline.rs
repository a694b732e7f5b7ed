//! Stage runners over a workspace directory.
//!
//! Every stage reads the artifacts of earlier stages and writes its own, so
//! each can be rerun on its own. Record stores carry an `.inprogress` marker
//! while a stage appends to them.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use tracing::{info, warn};

use crate::categorize::{self, CategoricalAnswer, FilterVerdict, VoteRecord};
use crate::config::{Config, ScorerKind};
use crate::corpus::{
    self, build_search_queries, FetchHook, PublicationRecord, DEFAULT_GROUP_SIZE, DEFAULT_MAX_CONNECTORS,
};
use crate::error::{Error, Result};
use crate::extraction::{self, AnswerRecord, CompetencyQuestion, MatrixJob};
use crate::footprint::EnergyEstimate;
use crate::gateway::{
    dedupe_timing_logs, ms_to_hours, Backend, Clock, Gateway, HttpBackend, MockBackend, MockFallback, ModelEndpoint,
    Stage, SystemClock, TimingLog, VirtualClock,
};
use crate::keywords;
use crate::metrics::{self, Annotation, ReferenceLabel};
use crate::prompts::PromptRegistry;
use crate::report::{self, RuntimeRow, Table};
use crate::retrieve::{EmbeddingScorer, Retriever};
use crate::store::{read_artifact, read_records, write_atomic, write_records, Record, RecordStore, StoreFormat};

/// Reported duration of every mock call.
pub const MOCK_LATENCY: Duration = Duration::from_millis(1500);

impl Record for PublicationRecord {
    type Key = String;

    fn key(&self) -> String {
        self.doi().to_string()
    }
}

/// Paths inside one run directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<()> {
        for d in [
            "corpus", "keywords", "answers", "verdicts", "votes", "filters", "reports", "logs",
        ] {
            let p = self.root.join(d);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(format!("creating {}", p.display()), e))?;
        }
        Ok(())
    }

    pub fn publications(&self) -> PathBuf {
        self.root.join("corpus/publications.jsonl")
    }

    pub fn keywords(&self) -> PathBuf {
        self.root.join("keywords")
    }

    pub fn answers(&self) -> PathBuf {
        self.root.join("answers/answers.jsonl")
    }

    pub fn verdicts(&self) -> PathBuf {
        self.root.join("verdicts/verdicts.csv")
    }

    pub fn votes(&self) -> PathBuf {
        self.root.join("votes/votes.csv")
    }

    pub fn filter(&self) -> PathBuf {
        self.root.join("filters/filter.csv")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("logs/timing.csv")
    }
}

fn marker(store: &Path) -> PathBuf {
    let mut name = store.file_name().unwrap_or_default().to_os_string();
    name.push(".inprogress");
    store.with_file_name(name)
}

/// Holds the in-progress marker for a store until `finish`.
struct StageGuard {
    marker: PathBuf,
}

impl StageGuard {
    fn begin(store: &Path, resume: bool) -> Result<Self> {
        let marker = marker(store);
        if marker.exists() && !resume {
            return Err(Error::InvalidInput(format!(
                "{} was left by an interrupted run; rerun with --resume to continue it",
                marker.display()
            )));
        }
        write_atomic(&marker, b"")?;
        Ok(StageGuard { marker })
    }

    fn finish(self) -> Result<()> {
        std::fs::remove_file(&self.marker).map_err(|e| Error::io(format!("removing {}", self.marker.display()), e))
    }
}

/// How a stage ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Some work items failed; their count is given.
    Incomplete(usize),
}

impl Outcome {
    fn and(self, other: Outcome) -> Outcome {
        match (self, other) {
            (Outcome::Done, o) | (o, Outcome::Done) => o,
            (Outcome::Incomplete(a), Outcome::Incomplete(b)) => Outcome::Incomplete(a + b),
        }
    }
}

/// Run-wide state shared by the stages.
pub struct Pipeline {
    pub config: Config,
    pub workspace: Workspace,
    pub endpoints: Vec<ModelEndpoint>,
    pub gateway: Gateway,
    pub prompts: PromptRegistry,
    pub retriever: Retriever,
    pub questions: Vec<CompetencyQuestion>,
    pub resume: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workspace: PathBuf,
    pub mock: Option<PathBuf>,
    pub endpoints: Option<String>,
    pub resume: bool,
    pub parallelism: Option<usize>,
}

impl Pipeline {
    pub fn new(mut config: Config, opts: &RunOptions) -> Result<Self> {
        if let Some(p) = opts.parallelism {
            config.parallelism = p.max(1);
        }
        let (backend, clock): (Arc<dyn Backend>, Arc<dyn Clock>) = match &opts.mock {
            Some(dir) => (
                Arc::new(MockBackend::from_dir(dir, MockFallback::Synthetic)?.with_latency(MOCK_LATENCY)),
                Arc::new(VirtualClock::default()),
            ),
            None => (
                Arc::new(HttpBackend::new(Duration::from_secs(300))),
                Arc::new(SystemClock::default()),
            ),
        };
        let gateway = Gateway::new(backend, clock, config.retry);
        let prompts = match &config.prompt_dir {
            Some(d) => PromptRegistry::with_overrides(d)?,
            None => PromptRegistry::builtin(),
        };
        let retriever = match config.scorer {
            ScorerKind::Lexical => Retriever::lexical(config.chunking, config.retrieval_budget),
            ScorerKind::Embedding => {
                let e = &config.embedding;
                let embedder = crate::gateway::HttpEmbedder::new(&e.base_url, &e.model_id, &e.api_key_env);
                Retriever::new(
                    config.chunking,
                    config.retrieval_budget,
                    Arc::new(EmbeddingScorer::new(embedder)),
                )
            }
        };
        let questions = match &config.questions {
            Some(p) => extraction::load_questions(p)?,
            None => extraction::builtin_questions(),
        };
        let endpoints = config.select_endpoints(opts.endpoints.as_deref())?;
        let workspace = Workspace::new(&opts.workspace);
        workspace.create()?;
        Ok(Pipeline {
            config,
            workspace,
            endpoints,
            gateway,
            prompts,
            retriever,
            questions,
            resume: opts.resume,
        })
    }

    fn flush_timing(&self) -> Result<()> {
        let log = self.gateway.timing().drain();
        if !log.is_empty() {
            log.append_csv(&self.workspace.timing())?;
        }
        Ok(())
    }

    fn publications(&self) -> Result<Vec<PublicationRecord>> {
        read_artifact(&self.workspace.publications(), "ingest")
    }

    fn require_endpoints(&self) -> Result<()> {
        if self.endpoints.is_empty() {
            return Err(Error::Config("no endpoints configured".into()));
        }
        Ok(())
    }

    /// Parse bibliographies in `corpus_dir`, dedupe and attach texts.
    pub fn ingest(&self, corpus_dir: &Path) -> Result<Outcome> {
        let hook = self.config.fetch_command.as_ref().and_then(|c| {
            c.split_first().map(|(program, args)| FetchHook {
                program: program.clone(),
                args: args.to_vec(),
            })
        });
        let load = corpus::load_corpus(corpus_dir, hook.as_ref())?;
        for issue in &load.bibliography_issues {
            warn!(offset = issue.offset, key = ?issue.key, "{}", issue.message);
        }
        let mut records = load.records;
        records.sort_by(|a, b| a.doi().cmp(b.doi()));
        write_records(&self.workspace.publications(), &records)?;
        write_records(&self.workspace.root().join("corpus/skipped.csv"), &load.skipped)?;
        let summary = format!(
            "citations_indexed\t{}\nissues\t{}\npublications\t{}\nskipped\t{}\n",
            load.citations_indexed,
            load.bibliography_issues.len(),
            records.len(),
            load.skipped.len()
        );
        write_atomic(&self.workspace.root().join("corpus/summary.tsv"), summary.as_bytes())?;
        info!(
            citations = load.citations_indexed,
            publications = records.len(),
            skipped = load.skipped.len(),
            "ingested"
        );
        Ok(Outcome::Done)
    }

    /// Harvest, consolidate and curate keywords, then build search queries.
    pub fn keywords(&self) -> Result<Outcome> {
        let dir = self.workspace.keywords();
        let kw = &self.config.keywords;
        let mut consolidated = None;
        if let Some(abstracts_dir) = &kw.abstracts {
            let endpoint = self.config.keyword_endpoint()?;
            let raw_path = dir.join("raw.txt");
            let raw = if raw_path.exists() {
                keywords::read_list(&raw_path)?
            } else {
                let abstracts = read_text_dir(abstracts_dir)?;
                let raw = keywords::extract_all(
                    &abstracts,
                    endpoint,
                    &self.prompts,
                    &self.gateway,
                    self.config.parallelism,
                )?;
                keywords::write_list(&raw_path, &raw)?;
                raw
            };
            let cons_path = dir.join("consolidated.txt");
            let cons = if cons_path.exists() {
                keywords::read_list(&cons_path)?
            } else {
                let cons = keywords::consolidate_keywords(&raw, endpoint, &self.prompts, &self.gateway)?;
                keywords::write_list(&cons_path, &cons)?;
                cons
            };
            info!(raw = raw.len(), consolidated = cons.len(), "keywords harvested");
            consolidated = Some(cons);
            self.flush_timing()?;
        }
        let curated = match &kw.curated {
            Some(p) => keywords::load_curated(p)?,
            None => keywords::builtin_curated(),
        };
        keywords::write_list(&dir.join("curated.txt"), curated.keywords())?;
        if let Some(cons) = consolidated {
            let diff = keywords::curation_diff(&cons, &curated);
            let mut text = String::new();
            for k in &diff.removed {
                text.push_str(&format!("- {k}\n"));
            }
            for k in &diff.added {
                text.push_str(&format!("+ {k}\n"));
            }
            write_atomic(&dir.join("curation.diff"), text.as_bytes())?;
        }
        let queries = build_search_queries(&curated, DEFAULT_MAX_CONNECTORS, DEFAULT_GROUP_SIZE)?;
        keywords::write_list(&dir.join("queries.txt"), &queries)?;
        Ok(Outcome::Done)
    }

    /// Answer every (publication, CQ, endpoint) cell.
    pub fn ask(&self) -> Result<Outcome> {
        self.require_endpoints()?;
        let publications = self.publications()?;
        let path = self.workspace.answers();
        let guard = StageGuard::begin(&path, self.resume)?;
        let store = RecordStore::<AnswerRecord>::open(&path)?;
        let job = MatrixJob {
            publications: &publications,
            questions: &self.questions,
            endpoints: &self.endpoints,
            retriever: &self.retriever,
            prompts: &self.prompts,
            gateway: &self.gateway,
            parallelism: self.config.parallelism,
        };
        let summary = extraction::run_matrix(&job, &store)?;
        store.canonicalize()?;
        self.flush_timing()?;
        guard.finish()?;
        info!(
            expected = summary.expected,
            existing = summary.existing,
            completed = summary.completed,
            failed = summary.failures.len(),
            "answer matrix"
        );
        for f in &summary.failures {
            warn!(doi = %f.doi, cq = f.cq_id, endpoint = %f.endpoint, "{}", f.message);
        }
        Ok(if summary.is_complete() {
            Outcome::Done
        } else {
            Outcome::Incomplete(summary.failures.len())
        })
    }

    /// Convert stored answers to Yes/No verdicts with their own endpoints.
    pub fn categorize(&self) -> Result<Outcome> {
        self.require_endpoints()?;
        let answers: Vec<AnswerRecord> = read_artifact(&self.workspace.answers(), "ask")?;
        let path = self.workspace.verdicts();
        let guard = StageGuard::begin(&path, self.resume)?;
        let store = RecordStore::<CategoricalAnswer>::open(&path)?;
        let summary = categorize::run_conversion(
            &answers,
            &self.questions,
            &self.endpoints,
            &self.prompts,
            &self.gateway,
            &store,
            self.config.parallelism,
        )?;
        store.canonicalize()?;
        self.flush_timing()?;
        guard.finish()?;
        info!(
            existing = summary.existing,
            converted = summary.converted,
            failed = summary.failed,
            "categorical conversion"
        );
        Ok(Outcome::Done)
    }

    pub fn vote(&self) -> Result<Outcome> {
        let verdicts: Vec<CategoricalAnswer> = read_artifact(&self.workspace.verdicts(), "categorize")?;
        let votes = categorize::vote_all(&verdicts, self.config.tie_rule)?;
        write_records(&self.workspace.votes(), &votes)?;
        info!(votes = votes.len(), "voted");
        Ok(Outcome::Done)
    }

    /// Judge each publication once with the filter endpoint.
    pub fn filter(&self) -> Result<Outcome> {
        let publications = self.publications()?;
        let endpoint = self.config.filter_endpoint()?;
        let path = self.workspace.filter();
        let guard = StageGuard::begin(&path, self.resume)?;
        let store = RecordStore::<FilterVerdict>::open(&path)?;
        let summary = categorize::run_filter(
            &publications,
            endpoint,
            &self.retriever,
            &self.prompts,
            &self.gateway,
            &store,
            self.config.parallelism,
        )?;
        if store.is_empty() {
            write_records::<FilterVerdict>(&path, &[])?;
        }
        store.canonicalize()?;
        self.flush_timing()?;
        guard.finish()?;
        let kept = store.records().iter().filter(|f| f.is_dl_study).count();
        info!(judged = summary.judged, undecided = summary.undecided, kept, "filtered");
        Ok(Outcome::Done)
    }

    fn question_text(&self) -> impl Fn(u32) -> String + '_ {
        |id| {
            self.questions
                .iter()
                .find(|q| q.id == id)
                .map(|q| q.text.clone())
                .unwrap_or_default()
        }
    }

    /// Tables that compare against human labels and between models.
    pub fn evaluate(&self) -> Result<Outcome> {
        let out = self.workspace.reports();
        for (stem, table) in self.evaluation_tables()? {
            table.write(&out, stem)?;
        }
        Ok(Outcome::Done)
    }

    pub fn evaluation_tables(&self) -> Result<Vec<(&'static str, Table)>> {
        let ws = &self.workspace;
        let answers: Vec<AnswerRecord> = read_artifact(&ws.answers(), "ask")?;
        let verdicts: Vec<CategoricalAnswer> = read_artifact(&ws.verdicts(), "categorize")?;
        let votes: Vec<VoteRecord> = read_artifact(&ws.votes(), "vote")?;
        let filter: Vec<FilterVerdict> = read_artifact(&ws.filter(), "filter")?;
        let mut tables = Vec::new();

        if let Some(p) = &self.config.evaluation.annotations {
            let annotations: Vec<Annotation> = read_records(p, StoreFormat::Csv)?;
            let order: Vec<String> = self.config.endpoints.iter().map(|e| e.name.clone()).collect();
            tables.push((
                "human_agreement",
                human_agreement_table(&verdicts, &annotations, &order)?,
            ));
        }
        if let Some(p) = &self.config.evaluation.reference {
            let reference: Vec<ReferenceLabel> = read_records(p, StoreFormat::Csv)?;
            tables.push((
                "reference_agreement",
                reference_table(
                    &self.config.variable_mapping(),
                    &votes,
                    &reference,
                    self.question_text(),
                )?,
            ));
        }
        let kept = kept_dois(&votes, &filter);
        tables.push(("similarity", similarity_table(&answers, &kept)?));
        tables.push(("pairwise_kappa", pairwise_kappa_table(&verdicts, &kept)?));
        Ok(tables)
    }

    pub fn footprint(&self) -> Result<Outcome> {
        self.footprint_table()?.write(&self.workspace.reports(), "footprint")?;
        Ok(Outcome::Done)
    }

    fn timing_log(&self) -> Result<TimingLog> {
        let path = self.workspace.timing();
        if !path.exists() {
            return Err(Error::MissingArtifact { path, stage: "ask" });
        }
        Ok(dedupe_timing_logs(&TimingLog::read_csv(&path)?))
    }

    pub fn footprint_table(&self) -> Result<Table> {
        let log = self.timing_log()?;
        footprint_table(&log, &self.config)
    }

    /// Every table, from stored artifacts.
    pub fn report(&self) -> Result<Outcome> {
        let out = self.workspace.reports();
        let log = self.timing_log()?;
        let rows: Vec<RuntimeRow> = self
            .config
            .endpoints
            .iter()
            .map(|e| RuntimeRow {
                endpoint: e.name.clone(),
                hardware: e.hardware.clone().unwrap_or_default(),
            })
            .collect();
        report::runtime_table(&log, &rows).write(&out, "runtime")?;
        let votes: Vec<VoteRecord> = read_artifact(&self.workspace.votes(), "vote")?;
        let filter: Vec<FilterVerdict> = read_artifact(&self.workspace.filter(), "filter")?;
        coverage_table(&votes, &filter, &self.questions).write(&out, "coverage")?;
        for (stem, table) in self.evaluation_tables()? {
            table.write(&out, stem)?;
        }
        footprint_table(&log, &self.config)?.write(&out, "footprint")?;
        Ok(Outcome::Done)
    }

    /// Every stage in workflow order.
    pub fn all(&self, corpus_dir: &Path) -> Result<Outcome> {
        self.ingest(corpus_dir)?;
        self.keywords()?;
        let mut outcome = self.ask()?;
        outcome = outcome.and(self.categorize()?);
        self.vote()?;
        self.filter()?;
        self.report()?;
        Ok(outcome)
    }
}

fn read_text_dir(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e)))
        .collect()
}

/// DOIs with votes that the filter did not reject.
pub fn kept_dois<'a>(votes: &'a [VoteRecord], filter: &[FilterVerdict]) -> HashSet<&'a str> {
    let dois: BTreeSet<&str> = votes.iter().map(|v| v.doi.as_str()).collect();
    categorize::retained(dois, filter).into_iter().collect()
}

pub fn human_agreement_table(
    verdicts: &[CategoricalAnswer],
    annotations: &[Annotation],
    order: &[String],
) -> Result<Table> {
    let rows = metrics::human_agreement(&metrics::group_verdicts(verdicts), annotations, order)?;
    Ok(report::human_agreement_table(&rows))
}

pub fn reference_table(
    mapping: &[(u32, String)],
    votes: &[VoteRecord],
    reference: &[ReferenceLabel],
    question: impl Fn(u32) -> String,
) -> Result<Table> {
    let cmp = metrics::compare_with_reference(mapping, votes, reference)?;
    Ok(report::reference_table(&cmp, question))
}

pub fn coverage_table(votes: &[VoteRecord], filter: &[FilterVerdict], questions: &[CompetencyQuestion]) -> Table {
    let kept = kept_dois(votes, filter);
    report::coverage_table(&metrics::per_cq_coverage(votes, &kept, questions))
}

pub fn similarity_table(answers: &[AnswerRecord], kept: &HashSet<&str>) -> Result<Table> {
    let grouped = metrics::group_answers(answers);
    let all = metrics::average_pairwise_similarity(&grouped)?.pairs();
    let filtered = metrics::average_pairwise_similarity(&metrics::restrict(&grouped, kept))?.pairs();
    Ok(report::pair_table(
        "Average cosine similarity of textual answers per model pair",
        &all,
        &filtered,
    ))
}

pub fn pairwise_kappa_table(verdicts: &[CategoricalAnswer], kept: &HashSet<&str>) -> Result<Table> {
    let grouped = metrics::group_verdicts(verdicts);
    let all = metrics::pairwise_kappa(&grouped)?;
    let filtered = metrics::pairwise_kappa(&metrics::restrict(&grouped, kept))?;
    Ok(report::pair_table(
        "Cohen's kappa of categorical verdicts per model pair",
        &all,
        &filtered,
    ))
}

/// Energy per stage over endpoints that name a hardware profile.
pub fn footprint_table(log: &TimingLog, config: &Config) -> Result<Table> {
    let mut rows = Vec::new();
    let mut runtime: HashMap<(Stage, &str), u64> = HashMap::new();
    for e in log.entries() {
        *runtime.entry((e.stage, e.endpoint.as_str())).or_default() += e.duration_ms;
    }
    for stage in [Stage::Rag, Stage::Categorize] {
        let mut parts = Vec::new();
        for ep in &config.endpoints {
            let Some(hw) = ep.hardware.as_deref() else {
                continue;
            };
            let profile = config
                .hardware(hw)
                .ok_or_else(|| Error::Config(format!("unknown hardware profile `{hw}`")))?;
            let ms = runtime.get(&(stage, ep.name.as_str())).copied().unwrap_or(0);
            parts.push(EnergyEstimate::new(
                ms_to_hours(ms),
                profile,
                config.location_intensity,
                config.tree_month_constant,
            )?);
        }
        let est = EnergyEstimate::combine(&parts, config.location_intensity, config.tree_month_constant)?;
        rows.push((stage, est));
    }
    Ok(report::footprint_table(&rows))
}
