use std::path::{Path, PathBuf};

use hctc::data::{
    feature_path, generate_synthetic, load_corpus, parse_transcripts, read_transcripts,
    write_transcripts, FeatureMatrix, SyntheticSpec, Transcript, FEATURE_EXTENSION,
};
use hctc::decode::{fusion_beam_search, greedy_decode, FusionConfig, LmScoring};
use hctc::eval::{score_corpus, Granularity};
use hctc::lm::{LmBackend, LmModel, RecurrentLmConfig};
use hctc::model::{
    build_model, prepare_examples, stack_frames, train, ModelGraph, RunConfig, TopologyKind,
};
use hctc::nn::{ParamGroup, Sgd};
use hctc::units::{decode_units, encode_subwords, MergeTable, UnitCodec, UnitSpec};

use crate::manifest::{manifest_path_for, RunManifest};
use crate::{
    BpeApplyArgs, BpeCommand, BpeInvertArgs, BpeLearnArgs, CliError, Command, DecodeArgs,
    DecodeMode, FeatureForm, FeaturesCommand, InspectCommand, LmCommand, LmKind, LmTrainArgs,
    ScoreArgs, Scoring, SynthArgs, SynthCommand, TextFormat, Topology, TrainArgs, Unit,
};

type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn run(command: Command) -> Result<()> {
    match command {
        Command::Bpe(BpeCommand::Learn(a)) => bpe_learn(a),
        Command::Bpe(BpeCommand::Apply(a)) => bpe_apply(a),
        Command::Bpe(BpeCommand::Invert(a)) => bpe_invert(a),
        Command::Features(FeaturesCommand::Convert(a)) => features_convert(a.input, a.out, a.to),
        Command::Synth(SynthCommand::Generate(a)) => synth_generate(a),
        Command::Train(a) => train_model(a),
        Command::Lm(LmCommand::Train(a)) => lm_train(a),
        Command::Decode(a) => decode(a),
        Command::Score(a) => score(a),
        Command::Inspect(InspectCommand::Checkpoint { path }) => inspect_checkpoint(&path),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            out_raw!("{text}");
            Ok(())
        }
    }
}

/// `(id, text)` lines; ids are `None` for plain text.
fn read_lines(path: &Path, format: TextFormat) -> Result<Vec<(Option<String>, String)>> {
    let content = read_text(path)?;
    Ok(match format {
        TextFormat::Text => content.lines().map(|l| (None, l.to_string())).collect(),
        TextFormat::Transcripts => parse_transcripts(&content, false)?
            .into_iter()
            .map(|t| (Some(t.utt_id), t.text))
            .collect(),
    })
}

fn write_lines(lines: &[(Option<String>, String)]) -> String {
    let mut out = String::new();
    for (id, text) in lines {
        if let Some(id) = id {
            out.push_str(id);
            out.push('\t');
        }
        out.push_str(text);
        out.push('\n');
    }
    out
}

fn bpe_learn(a: BpeLearnArgs) -> Result<()> {
    let texts: Vec<String> = read_lines(&a.corpus, a.format)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    let codec = UnitCodec::subwords(&texts, a.ops)?;
    let table = codec.merges().expect("subword codec has merges");
    table.write(&a.out)?;
    if let Some(inv) = &a.inventory {
        codec.inventory().write(inv)?;
    }
    out!(
        "merges={} inventory={}",
        table.len(),
        codec.inventory().len()
    );
    Ok(())
}

fn bpe_apply(a: BpeApplyArgs) -> Result<()> {
    let table = MergeTable::read(&a.merges)?;
    let lines: Vec<(Option<String>, String)> = read_lines(&a.input, a.format)?
        .into_iter()
        .map(|(id, t)| (id, encode_subwords(&t, &table).join(" ")))
        .collect();
    emit(a.out.as_deref(), &write_lines(&lines))
}

fn bpe_invert(a: BpeInvertArgs) -> Result<()> {
    let lines: Vec<(Option<String>, String)> = read_lines(&a.input, a.format)?
        .into_iter()
        .map(|(id, t)| {
            let pieces: Vec<&str> = t.split_whitespace().collect();
            (id, decode_units(&pieces, false))
        })
        .collect();
    emit(a.out.as_deref(), &write_lines(&lines))
}

fn features_convert(input: PathBuf, out: PathBuf, to: FeatureForm) -> Result<()> {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match to {
        FeatureForm::Binary => FeatureMatrix::parse_text(stem, &read_text(&input)?)?.write(&out)?,
        FeatureForm::Text => {
            let m = FeatureMatrix::read(&input)?;
            let mut text = String::new();
            for t in 0..m.frames() {
                let row: Vec<String> = m.values().col(t).iter().map(|v| format!("{v}")).collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            write_text(&out, &text)?;
        }
    }
    Ok(())
}

fn synth_generate(a: SynthArgs) -> Result<()> {
    let mut spec: SyntheticSpec = match &a.spec {
        Some(p) => toml::from_str(&read_text(p)?)
            .map_err(|e| CliError::Lib(hctc::Error::Config(e.to_string())))?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let utts = generate_synthetic(&spec, a.train + a.test)?;
    let feats = a.out.join("feats");
    std::fs::create_dir_all(&feats).map_err(|e| CliError::io(&feats, e))?;
    for u in &utts {
        u.features
            .write(&feature_path(&feats, &u.transcript.utt_id))?;
    }
    let transcripts: Vec<Transcript> = utts.into_iter().map(|u| u.transcript).collect();
    let (train_set, test_set) = transcripts.split_at(a.train);
    let train_path = a.out.join("train.txt");
    let test_path = a.out.join("test.txt");
    write_transcripts(&train_path, train_set)?;
    write_transcripts(&test_path, test_set)?;

    let mut m =
        RunManifest::new(serde_json::to_value(&spec).map_err(|e| CliError::Data(e.to_string()))?);
    m.seed("synth", spec.seed);
    for p in [&feats, &train_path, &test_path] {
        m.artifact(p);
    }
    m.write(&a.out.join("synth.manifest.json"))?;
    out!(
        "train={} test={} dir={}",
        train_set.len(),
        test_set.len(),
        a.out.display()
    );
    Ok(())
}

fn resolve_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_toml(&read_text(p)?)?,
        None => RunConfig::default(),
    };
    let m = &mut cfg.model;
    if let Some(t) = a.topology {
        m.kind = match t {
            Topology::Stl => TopologyKind::Stl,
            Topology::Bmtl => TopologyKind::Bmtl,
            Topology::Hmtl => TopologyKind::Hmtl,
        };
    }
    if let Some(h) = &a.heads {
        m.heads = h.clone();
    }
    if let Some(v) = a.shared_layers {
        m.shared_layers = v;
    }
    if let Some(v) = a.hidden {
        m.hidden = v;
    }
    if let Some(v) = a.projection {
        m.projection = v;
    }
    if let Some(v) = a.head_hidden {
        m.head_hidden = v;
    }
    let t = &mut cfg.training;
    if let Some(w) = &a.weights {
        t.weights = w.clone();
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.optimizer.learning_rate = v;
    }
    if let Some(v) = a.clip {
        t.optimizer.clip_norm = v;
    }
    if let Some(v) = a.subsample {
        t.subsample = v;
    }
    if a.no_augment {
        t.augment = false;
    }
    if let Some(v) = a.jobs {
        t.jobs = v;
    }
    if let Some(seed) = a.seed {
        t.seed = seed;
        cfg.model.seed = seed;
    }
    if cfg.training.jobs == 0 || cfg.training.subsample == 0 {
        return Err(CliError::Usage(
            "--jobs and --subsample must be at least 1".into(),
        ));
    }
    Ok(cfg)
}

fn train_model(a: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(&a)?;
    let transcripts = read_transcripts(&a.transcripts, cfg.training.lowercase)?;
    let corpus = load_corpus(&a.features, transcripts)?;
    let Some((first, _)) = corpus.first() else {
        return Err(hctc::Error::EmptyCorpus.into());
    };
    // the model input is the stacked frame, whatever the config file says
    cfg.model.input_dim = first.dim() * cfg.training.subsample;
    let texts: Vec<&str> = corpus.iter().map(|(_, t)| t.text.as_str()).collect();
    let codecs = cfg
        .model
        .heads
        .iter()
        .map(|h| UnitSpec::parse(h)?.build_codec(&texts))
        .collect::<hctc::Result<Vec<_>>>()?;
    let mut model: ModelGraph<f64> = build_model(&cfg.model, codecs)?;
    let examples = prepare_examples(model.codecs(), &corpus, &cfg.training)?;
    let stats = train(&mut model, &examples, &cfg.training, |_, _| {})?;
    for s in &stats {
        out!(
            "epoch={} loss={:.6} steps={} skipped={}",
            s.epoch + 1,
            s.mean_loss,
            s.steps,
            s.skipped
        );
    }
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let ckpt = a.out.join("model.hctc");
    model.save(&ckpt)?;

    let mut m =
        RunManifest::new(serde_json::to_value(&cfg).map_err(|e| CliError::Data(e.to_string()))?);
    m.seed("model", cfg.model.seed);
    m.seed("training", cfg.training.seed);
    m.input(&a.features)?;
    m.input(&a.transcripts)?;
    if let Some(c) = &a.config {
        m.input(c)?;
    }
    m.artifact(&ckpt);
    m.write(&manifest_path_for(&ckpt))?;
    out!(
        "params={} checkpoint={}",
        model.param_count(),
        ckpt.display()
    );
    Ok(())
}

fn head_of(model: &ModelGraph<f64>, head: Option<&str>) -> Result<usize> {
    match head {
        Some(name) => Ok(model.head_index(name)?),
        None => Ok(model.heads().len() - 1),
    }
}

fn lm_train(a: LmTrainArgs) -> Result<()> {
    let model = ModelGraph::<f64>::load(&a.checkpoint)?;
    let head = head_of(&model, a.head.as_deref())?;
    let codec = &model.codecs()[head];
    let transcripts = read_transcripts(&a.transcripts, a.lowercase)?;
    let corpus = transcripts
        .iter()
        .map(|t| codec.encode(&t.text))
        .collect::<hctc::Result<Vec<_>>>()?;
    let backend = match a.backend {
        LmKind::Ngram => LmBackend::NGram {
            order: a.order,
            alpha: a.alpha,
        },
        LmKind::Recurrent => LmBackend::Recurrent(RecurrentLmConfig {
            hidden: a.hidden,
            layers: a.layers,
            steps: a.steps,
            seed: a.seed,
            optimizer: Sgd {
                learning_rate: a.lr,
                ..RecurrentLmConfig::default().optimizer
            },
            ..RecurrentLmConfig::default()
        }),
    };
    let lm = LmModel::train(&corpus, codec.inventory(), &backend)?;
    lm.write(&a.out)?;

    let config = serde_json::json!({
        "head": model.heads()[head].name,
        "backend": lm.backend_name(),
        "order": a.order,
        "alpha": a.alpha,
        "hidden": a.hidden,
        "layers": a.layers,
        "steps": a.steps,
        "lr": a.lr,
        "lowercase": a.lowercase,
    });
    let mut m = RunManifest::new(config);
    m.seed("lm", a.seed);
    m.input(&a.checkpoint)?;
    m.input(&a.transcripts)?;
    m.artifact(&a.out);
    m.write(&manifest_path_for(&a.out))?;
    out!(
        "backend={} perplexity={:.4}",
        lm.backend_name(),
        lm.perplexity(&corpus)?
    );
    Ok(())
}

fn feature_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == FEATURE_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

/// Stacks raw features the way the model was trained: the model input
/// width is a whole multiple of the feature width.
fn model_input(model: &ModelGraph<f64>, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let want = model.input_dim();
    if x.dim() == 0 || !want.is_multiple_of(x.dim()) {
        return Err(hctc::Error::Contract(format!(
            "{}: {}-dimensional features do not stack to the model input width {want}",
            x.utt_id,
            x.dim()
        ))
        .into());
    }
    let factor = want / x.dim();
    Ok(if factor > 1 {
        stack_frames(x, factor, 0)?
    } else {
        x.clone()
    })
}

fn decode(a: DecodeArgs) -> Result<()> {
    let model = ModelGraph::<f64>::load(&a.checkpoint)?;
    let head = head_of(&model, a.head.as_deref())?;
    let codec = &model.codecs()[head];
    let fusion = FusionConfig {
        beam: a.beam,
        bonus: a.bonus,
        lm_weight: a.lm_weight,
        scoring: match a.scoring {
            Scoring::PerEmission => LmScoring::PerEmission,
            Scoring::PerFrame => LmScoring::PerFrame,
        },
    };
    if a.mode == DecodeMode::Fusion {
        fusion
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    } else if a.lm.is_some() {
        return Err(CliError::Usage("--lm needs --mode fusion".into()));
    }
    let lm = match &a.lm {
        Some(p) => {
            let lm = LmModel::read(p)?;
            lm.check_inventory(codec.inventory())?;
            Some(lm)
        }
        None => None,
    };
    let files = match &a.transcripts {
        Some(p) => read_transcripts(p, false)?
            .iter()
            .map(|t| feature_path(&a.features, &t.utt_id))
            .collect(),
        None => feature_files(&a.features)?,
    };
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no .{FEATURE_EXTENSION} files in {}",
            a.features.display()
        )));
    }
    let mut hyps = Vec::with_capacity(files.len());
    for f in &files {
        let x = model_input(&model, &FeatureMatrix::read(f)?)?;
        let post = model.forward_head(x.values(), head)?;
        let units = match a.mode {
            DecodeMode::Greedy => greedy_decode(&post),
            DecodeMode::Fusion => fusion_beam_search(&post, lm.as_ref(), &fusion)?.units,
        };
        hyps.push(Transcript::new(x.utt_id.clone(), codec.decode(&units)));
    }
    write_transcripts(&a.out, &hyps)?;

    let config = serde_json::json!({
        "head": model.heads()[head].name,
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "fusion": fusion,
    });
    let mut m = RunManifest::new(config);
    m.input(&a.checkpoint)?;
    m.input(&a.features)?;
    for p in a.lm.iter().chain(&a.transcripts) {
        m.input(p)?;
    }
    m.artifact(&a.out);
    m.write(&manifest_path_for(&a.out))?;
    out!("decoded={} hypotheses={}", hyps.len(), a.out.display());
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let refs = read_transcripts(&a.reference, false)?;
    let hyps = read_transcripts(&a.hypothesis, false)?;
    let granularity = match a.unit {
        Unit::Word => Granularity::Word,
        Unit::Char => Granularity::Char,
    };
    let report = score_corpus(&refs, &hyps, granularity)?.report(granularity.rate_key());
    out_raw!("{report}");
    if let Some(out) = &a.out {
        write_text(out, &report)?;
    }
    Ok(())
}

fn inspect_checkpoint(path: &Path) -> Result<()> {
    let model = ModelGraph::<f64>::load(path)?;
    out!("kind={:?}", model.config().kind);
    out!("params={}", model.param_count());
    out!("input_dim={}", model.input_dim());
    for (h, codec) in model.heads().iter().zip(model.codecs()) {
        out!(
            "head={} tap={} classes={} merges={} inventory_hash={}",
            h.name,
            h.tap,
            codec.inventory().len(),
            codec.merges().map_or(0, |m| m.len()),
            codec.inventory().hash()
        );
    }
    out!("---");
    out_raw!(
        "{}",
        toml::to_string(model.config()).map_err(|e| CliError::Data(e.to_string()))?
    );
    Ok(())
}
