#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "blindseg/audio.hpp"
#include "blindseg/config.hpp"
#include "blindseg/corpus.hpp"
#include "blindseg/evaluate.hpp"
#include "blindseg/markov.hpp"
#include "blindseg/mfcc.hpp"
#include "blindseg/quantize.hpp"
#include "blindseg/segment.hpp"
#include "blindseg/train.hpp"

namespace blindseg {

struct PipelineContext {
  PipelineConfig cfg;
  CorpusIndex index;
  SplitSpec split;
  std::filesystem::path work;
};

inline PipelineContext open_pipeline(const PipelineConfig& cfg) {
  if (cfg.corpus_root.empty()) throw ConfigError("corpus.root is not set");
  PipelineContext ctx;
  ctx.cfg = cfg;
  ctx.index = scan_corpus(cfg.corpus_root);
  ctx.split = split_corpus(ctx.index.train_ids, ctx.index.test_ids, cfg.val_fraction, cfg.seed);
  ctx.work = cfg.work_dir;
  return ctx;
}

namespace detail {

inline std::filesystem::path features_path(const PipelineContext& ctx, const std::string& id) {
  if (ctx.index.kind == CorpusKind::frames) return ctx.index.root / (id + ".csv");
  return ctx.work / "features" / (id + ".csv");
}

inline std::filesystem::path cats_path(const PipelineContext& ctx, const std::string& id) {
  if (ctx.index.kind == CorpusKind::categorical) return ctx.index.root / (id + ".sym");
  return ctx.work / "cats" / (id + ".sym");
}

// Artifact caching: a sidecar .hash file records the content hash of the
// inputs plus the relevant config section; matching stamps skip the stage.
inline bool stamp_matches(const std::filesystem::path& artifact, std::uint64_t hash) {
  const std::filesystem::path stamp = artifact.string() + ".hash";
  if (!std::filesystem::exists(artifact) || !std::filesystem::exists(stamp)) return false;
  return trim(read_text_file(stamp)) == std::to_string(hash);
}

inline void write_stamp(const std::filesystem::path& artifact, std::uint64_t hash) {
  write_text_file(artifact.string() + ".hash", std::to_string(hash));
}

inline std::string mfcc_config_string(const MfccConfig& m) {
  return format_double(m.window_ms) + "|" + format_double(m.hop_ms) + "|" +
         std::to_string(m.n_cepstra) + "|" + std::to_string(m.include_energy) + "|" +
         std::to_string(m.n_mel_filters) + "|" + format_double(m.pre_emphasis) + "|" +
         format_double(m.log_floor);
}

inline std::vector<std::string> all_ids(const PipelineContext& ctx) {
  std::vector<std::string> ids = ctx.split.train;
  ids.insert(ids.end(), ctx.split.validation.begin(), ctx.split.validation.end());
  ids.insert(ids.end(), ctx.split.test.begin(), ctx.split.test.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::map<std::string, int> load_utterance_rates(const PipelineContext& ctx) {
  std::map<std::string, int> rates;
  if (ctx.index.kind != CorpusKind::wav) return rates;
  const std::filesystem::path meta = ctx.work / "utts.txt";
  if (!std::filesystem::exists(meta)) {
    throw IoError("missing " + meta.string() + "; run `prepare` first");
  }
  std::istringstream in(read_text_file(meta));
  std::string id;
  int rate = 0;
  long n_frames = 0;
  while (in >> id >> rate >> n_frames) rates[id] = rate;
  return rates;
}

}  // namespace detail

struct PrepareStats {
  long computed = 0;
  long skipped = 0;
};

// Stage 1: features, codebook, categorical sequences. Idempotent: artifacts
// whose input hash matches the stamp are not recomputed.
inline PrepareStats cmd_prepare(const PipelineContext& ctx, std::ostream& log) {
  namespace fs = std::filesystem;
  const PipelineConfig& cfg = ctx.cfg;
  PrepareStats stats;
  const std::vector<std::string> ids = detail::all_ids(ctx);

  std::string meta;
  if (ctx.index.kind == CorpusKind::wav) {
    const std::string mfcc_cfg = detail::mfcc_config_string(cfg.mfcc);
    for (const auto& id : ids) {
      const fs::path wav = ctx.index.root / (id + ".wav");
      const std::string bytes = detail::read_text_file(wav);
      const std::uint64_t hash = fnv1a64(mfcc_cfg, fnv1a64(bytes));
      const fs::path out = detail::features_path(ctx, id);
      if (detail::stamp_matches(out, hash)) {
        ++stats.skipped;
        const FrameSequence cached = parse_frames_csv(detail::read_text_file(out), cfg.mfcc.hop_ms, id);
        meta += id + " " + std::to_string(load_wav(wav).sample_rate) + " " +
                std::to_string(cached.n_frames()) + "\n";
        continue;
      }
      const AudioSignal sig = load_wav(wav);
      const FrameSequence frames = compute_mfcc(sig, cfg.mfcc, id);
      detail::write_text_file(out, serialize_frames_csv(frames));
      detail::write_stamp(out, hash);
      meta += id + " " + std::to_string(sig.sample_rate) + " " +
              std::to_string(frames.n_frames()) + "\n";
      ++stats.computed;
    }
    detail::write_text_file(ctx.work / "utts.txt", meta);
    log << "features: " << stats.computed << " computed, " << stats.skipped << " cached\n";
  }

  if (ctx.index.kind == CorpusKind::categorical) {
    // nothing to build; validate that every symbol is inside the codebook range
    for (const auto& id : ids) {
      const CategoricalSequence seq =
          parse_symbols(detail::read_text_file(detail::cats_path(ctx, id)), ctx.index.hop_ms, id);
      for (int s : seq.symbols) {
        if (s < 0 || s >= cfg.quant_k) {
          throw ConfigError("utterance " + id + " has symbol " + std::to_string(s) +
                            " outside 0.." + std::to_string(cfg.quant_k - 1));
        }
      }
    }
    log << "categorical corpus: symbols validated\n";
    return stats;
  }

  // codebook over the training portion (train + validation, never test)
  std::vector<std::string> fit_ids = ctx.split.train;
  fit_ids.insert(fit_ids.end(), ctx.split.validation.begin(), ctx.split.validation.end());
  std::sort(fit_ids.begin(), fit_ids.end());

  std::uint64_t cb_hash = fnv1a64(std::to_string(cfg.quant_k) + "|" + std::to_string(cfg.quant_n_init) +
                                  "|" + std::to_string(cfg.quant_sample) + "|" +
                                  std::to_string(cfg.quant_max_iters) + "|" + std::to_string(cfg.seed));
  std::vector<FrameSequence> fit_frames;
  for (const auto& id : fit_ids) {
    const std::string text = detail::read_text_file(detail::features_path(ctx, id));
    cb_hash = fnv1a64(text, cb_hash);
    fit_frames.push_back(parse_frames_csv(text, cfg.mfcc.hop_ms, id));
  }
  const std::filesystem::path cb_path = ctx.work / "codebook.txt";
  Codebook codebook;
  if (detail::stamp_matches(cb_path, cb_hash)) {
    codebook = load_codebook(cb_path);
    log << "codebook: cached\n";
  } else {
    const Eigen::MatrixXd sample =
        sample_frames(fit_frames, cfg.quant_sample, derive_seed(cfg.seed, seed_stream::frame_sample));
    codebook = fit_codebook(sample, cfg.quant_k, cfg.quant_n_init, cfg.seed, cfg.quant_max_iters);
    save_codebook(cb_path, codebook);
    detail::write_stamp(cb_path, cb_hash);
    log << "codebook: fitted (inertia " << codebook.inertia << ")\n";
  }

  long quantized = 0, q_skipped = 0;
  for (const auto& id : ids) {
    const std::string feat_text = detail::read_text_file(detail::features_path(ctx, id));
    const std::uint64_t hash = fnv1a64(serialize_codebook(codebook), fnv1a64(feat_text));
    const std::filesystem::path out = detail::cats_path(ctx, id);
    if (detail::stamp_matches(out, hash)) {
      ++q_skipped;
      continue;
    }
    const FrameSequence frames = parse_frames_csv(feat_text, cfg.mfcc.hop_ms, id);
    const CategoricalSequence seq = quantize(codebook, frames);
    for (int s : seq.symbols) {
      if (s < 0 || s >= cfg.quant_k) throw NumericError("quantize produced out-of-range symbol");
    }
    detail::write_text_file(out, serialize_symbols(seq));
    detail::write_stamp(out, hash);
    ++quantized;
  }
  stats.computed += quantized;
  stats.skipped += q_skipped;
  log << "categorical sequences: " << quantized << " computed, " << q_skipped << " cached\n";
  return stats;
}

namespace detail {

inline std::vector<CategoricalSequence> load_cats(const PipelineContext& ctx,
                                                  const std::vector<std::string>& ids) {
  std::vector<CategoricalSequence> out;
  for (const auto& id : ids) {
    out.push_back(parse_symbols(read_text_file(cats_path(ctx, id)), ctx.index.hop_ms, id));
  }
  return out;
}

inline std::vector<FrameSequence> load_features(const PipelineContext& ctx,
                                                const std::vector<std::string>& ids) {
  if (ctx.index.kind == CorpusKind::categorical) {
    throw ConfigError("this corpus has no continuous features; rnn-mfcc needs frames or audio");
  }
  std::vector<FrameSequence> out;
  for (const auto& id : ids) {
    out.push_back(parse_frames_csv(read_text_file(features_path(ctx, id)),
                                   ctx.index.kind == CorpusKind::frames ? ctx.index.hop_ms
                                                                        : ctx.cfg.mfcc.hop_ms,
                                   id));
  }
  return out;
}

}  // namespace detail

inline std::filesystem::path model_path(const PipelineContext& ctx) {
  if (ctx.cfg.model == "markov") return ctx.work / "model-markov.txt";
  if (ctx.cfg.model == "rnn-cat") return ctx.work / "model-rnn-cat.ckpt";
  if (ctx.cfg.model == "rnn-mfcc") return ctx.work / "model-rnn-mfcc.ckpt";
  if (ctx.cfg.model == "periodic") throw ConfigError("the periodic baseline has no model file");
  throw ConfigError("unknown model type: " + ctx.cfg.model);
}

// Stage 2: fit the configured predictor on the training split.
inline void cmd_train(const PipelineContext& ctx, std::ostream& log) {
  const PipelineConfig& cfg = ctx.cfg;
  if (cfg.model == "markov") {
    const auto train = detail::load_cats(ctx, ctx.split.train);
    const MarkovModel model = fit_markov(train, cfg.markov_order, cfg.markov_alpha, cfg.quant_k);
    save_markov(model_path(ctx), model);
    log << "markov model: order " << model.order() << ", saved\n";
    return;
  }
  if (cfg.model == "rnn-cat") {
    if (ctx.split.validation.empty()) {
      throw ConfigError("rnn training needs validation utterances; set corpus.val_fraction > 0");
    }
    const auto train = detail::load_cats(ctx, ctx.split.train);
    const auto val = detail::load_cats(ctx, ctx.split.validation);
    const TrainResult res = train_predictor(train, val, cfg.network_config(true));
    save_network(model_path(ctx), res.network);
    detail::write_text_file(ctx.work / "training_report.csv", serialize_training_report(res.report));
    log << "rnn-cat: best epoch " << res.report.best_epoch << ", val loss "
        << res.report.best_val_loss << "\n";
    return;
  }
  if (cfg.model == "rnn-mfcc") {
    if (ctx.split.validation.empty()) {
      throw ConfigError("rnn training needs validation utterances; set corpus.val_fraction > 0");
    }
    const auto train = detail::load_features(ctx, ctx.split.train);
    const auto val = detail::load_features(ctx, ctx.split.validation);
    const TrainResult res = train_predictor(train, val, cfg.network_config(false));
    save_network(model_path(ctx), res.network);
    detail::write_text_file(ctx.work / "training_report.csv", serialize_training_report(res.report));
    log << "rnn-mfcc: best epoch " << res.report.best_epoch << ", val loss "
        << res.report.best_val_loss << "\n";
    return;
  }
  if (cfg.model == "periodic") throw ConfigError("the periodic baseline needs no training");
  throw ConfigError("unknown model type: " + cfg.model);
}

namespace detail {

// Per-utterance error signals for the configured model, already prefix-zeroed.
inline std::vector<ErrorSignal> error_signals(const PipelineContext& ctx,
                                              const std::vector<std::string>& ids) {
  const PipelineConfig& cfg = ctx.cfg;
  std::vector<ErrorSignal> out;
  if (cfg.model == "markov") {
    const MarkovModel model = load_markov(model_path(ctx));
    for (const auto& seq : load_cats(ctx, ids)) {
      out.push_back(zero_prefix(markov_error(model, seq), cfg.prefix_frames));
    }
    return out;
  }
  if (cfg.model == "rnn-cat") {
    const LstmNetwork net = load_network(model_path(ctx));
    for (const auto& seq : load_cats(ctx, ids)) {
      out.push_back(zero_prefix(nn_error_signal(net, seq), cfg.prefix_frames));
    }
    return out;
  }
  if (cfg.model == "rnn-mfcc") {
    const LstmNetwork net = load_network(model_path(ctx));
    for (const auto& frames : load_features(ctx, ids)) {
      out.push_back(zero_prefix(nn_error_signal(net, frames), cfg.prefix_frames));
    }
    return out;
  }
  throw ConfigError("model '" + cfg.model + "' produces no error signal");
}

inline long utterance_frames(const PipelineContext& ctx, const std::string& id) {
  if (ctx.index.kind == CorpusKind::categorical) {
    return parse_symbols(read_text_file(cats_path(ctx, id)), ctx.index.hop_ms, id).size();
  }
  return parse_frames_csv(read_text_file(features_path(ctx, id)), 10.0, id).n_frames();
}

inline double corpus_hop_ms(const PipelineContext& ctx) {
  return ctx.index.kind == CorpusKind::wav ? ctx.cfg.mfcc.hop_ms : ctx.index.hop_ms;
}

}  // namespace detail

// Stage 3: hypothesize boundaries for every test utterance.
inline void cmd_segment(const PipelineContext& ctx, std::ostream& log, bool dump_errors = false) {
  const PipelineConfig& cfg = ctx.cfg;
  const std::vector<std::string>& ids = ctx.split.test;
  if (ids.empty()) throw ConfigError("corpus has no test utterances");

  if (cfg.model == "periodic") {
    for (const auto& id : ids) {
      const long n = detail::utterance_frames(ctx, id);
      const BoundarySet b = periodic_boundaries(n, detail::corpus_hop_ms(ctx), cfg.period_ms);
      save_boundaries(ctx.work / "boundaries" / (id + ".bnd"), b);
    }
    log << "periodic boundaries every " << cfg.period_ms << " ms for " << ids.size()
        << " utterances\n";
    return;
  }

  const std::vector<ErrorSignal> errors = detail::error_signals(ctx, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const FrameBoundaries fb = detect_boundaries(errors[i], cfg.delta, cfg.prominence_mode());
    const BoundarySet b = boundaries_to_seconds(fb);
    save_boundaries(ctx.work / "boundaries" / (ids[i] + ".bnd"), b, &fb);
    if (dump_errors) {
      std::string csv;
      for (double v : errors[i].values) {
        csv += detail::format_double(v);
        csv += '\n';
      }
      detail::write_text_file(ctx.work / "errors" / (ids[i] + ".csv"), csv);
    }
  }
  log << "segmented " << ids.size() << " utterances at delta " << cfg.delta << "\n";
}

namespace detail {

// Gold boundaries with the configured evaluation filters applied, plus the
// matching window for hypothesis filtering under silence trimming.
struct FilteredGold {
  BoundarySet gold;
  double trim_lo = -1.0, trim_hi = -1.0;  // negative = no trimming
};

inline FilteredGold filtered_gold(const PipelineContext& ctx, const std::string& id) {
  const PipelineConfig& cfg = ctx.cfg;
  int rate = ctx.index.sample_rate;
  if (ctx.index.kind == CorpusKind::wav) {
    static thread_local std::map<std::string, int> rates;
    if (rates.empty()) rates = load_utterance_rates(ctx);
    const auto it = rates.find(id);
    if (it == rates.end()) throw IoError("utterance " + id + " missing from utts.txt; run prepare");
    rate = it->second;
  }
  const PhnAnnotation ann = read_phn(ctx.index.root / (id + ".phn"), rate);

  FilteredGold fg;
  fg.gold = ann.boundaries;
  if (!cfg.include_edges) {
    fg.gold = drop_edge_boundaries(fg.gold, ann.boundaries.times.back());
  }
  if (cfg.trim_silence) {
    const auto [lo, hi] = speech_window(ann, {cfg.silence_label});
    fg.trim_lo = lo;
    fg.trim_hi = hi;
    fg.gold = trim_to_window(fg.gold, lo, hi);
  }
  return fg;
}

inline std::vector<MatchMode> eval_modes(const PipelineConfig& cfg) {
  if (cfg.eval_mode == "cropped") return {MatchMode::cropped};
  if (cfg.eval_mode == "overlapping") return {MatchMode::overlapping};
  if (cfg.eval_mode == "both") return {MatchMode::cropped, MatchMode::overlapping};
  throw ConfigError("unknown evaluation mode: " + cfg.eval_mode);
}

inline const char* mode_name(MatchMode m) {
  return m == MatchMode::cropped ? "cropped" : "overlapping";
}

}  // namespace detail

// Stage 4: score hypothesized boundaries against the gold annotation.
inline std::string cmd_evaluate(const PipelineContext& ctx, std::ostream& log) {
  const PipelineConfig& cfg = ctx.cfg;
  const std::vector<std::string>& ids = ctx.split.test;
  if (ids.empty()) throw ConfigError("corpus has no test utterances");

  std::string text_report;
  for (const MatchMode mode : detail::eval_modes(cfg)) {
    std::vector<MatchResult> per_utt;
    for (const auto& id : ids) {
      const detail::FilteredGold fg = detail::filtered_gold(ctx, id);
      BoundarySet hyp =
          load_boundaries(ctx.work / "boundaries" / (id + ".bnd"), BoundaryKind::hypothesis);
      if (fg.trim_lo >= 0.0) hyp = trim_to_window(hyp, fg.trim_lo, fg.trim_hi);
      if (fg.gold.size() == 0) continue;  // nothing scoreable after filters
      per_utt.push_back(match_boundaries(fg.gold, hyp, cfg.tolerance_ms, mode));
    }
    const MatchResult total = aggregate(per_utt);
    const EvaluationReport rep = compute_metrics(total);
    const std::string csv = report_csv_header() + report_csv_row(cfg.delta, rep);
    detail::write_text_file(ctx.work / ("report-" + std::string(detail::mode_name(mode)) + ".csv"),
                            csv);
    text_report += report_text(detail::mode_name(mode), total, rep);
  }
  detail::write_text_file(ctx.work / "report.txt", text_report);
  log << text_report;
  return text_report;
}

// Threshold sweep for precision/recall curves; one CSV row per delta.
inline std::vector<SweepPoint> cmd_sweep(const PipelineContext& ctx, std::ostream& log) {
  const PipelineConfig& cfg = ctx.cfg;
  const std::vector<std::string>& ids = ctx.split.test;
  if (ids.empty()) throw ConfigError("corpus has no test utterances");
  if (cfg.model == "periodic") {
    throw ConfigError("sweep varies the peak threshold; the periodic baseline has none");
  }

  const std::vector<double> deltas = cfg.parse_sweep_deltas();
  const std::vector<ErrorSignal> errors = detail::error_signals(ctx, ids);
  std::vector<BoundarySet> gold;
  std::vector<std::pair<double, double>> trims;
  for (const auto& id : ids) {
    const detail::FilteredGold fg = detail::filtered_gold(ctx, id);
    gold.push_back(fg.gold);
    trims.emplace_back(fg.trim_lo, fg.trim_hi);
  }

  const MatchMode mode = detail::eval_modes(cfg).front();
  std::vector<SweepPoint> points;
  for (double delta : deltas) {
    std::vector<MatchResult> per_utt;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      BoundarySet hyp =
          boundaries_to_seconds(detect_boundaries(errors[i], delta, cfg.prominence_mode()));
      if (trims[i].first >= 0.0) hyp = trim_to_window(hyp, trims[i].first, trims[i].second);
      if (gold[i].size() == 0) continue;
      per_utt.push_back(match_boundaries(gold[i], hyp, cfg.tolerance_ms, mode));
    }
    SweepPoint pt;
    pt.delta = delta;
    pt.match = aggregate(per_utt);
    pt.report = compute_metrics(pt.match);
    points.push_back(pt);
  }

  std::string csv = report_csv_header();
  for (const auto& pt : points) csv += report_csv_row(pt.delta, pt.report);
  detail::write_text_file(ctx.work / ("sweep-" + std::string(detail::mode_name(mode)) + ".csv"), csv);
  log << "sweep over " << deltas.size() << " deltas written\n";
  return points;
}

// Generates the synthetic corpus in the layout scan_corpus reads.
inline CorpusIndex cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out_root,
                             std::ostream& log) {
  const CorpusIndex index = write_synth_corpus(out_root, cfg.synth, cfg.seed);
  log << "synthetic corpus: " << index.train_ids.size() << " train / " << index.test_ids.size()
      << " test utterances at " << out_root << "\n";
  return index;
}

}  // namespace blindseg
