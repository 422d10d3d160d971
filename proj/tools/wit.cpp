// SPDX-License-Identifier: Apache-2.0
//
// wit: data generation, training, evaluation and plotting for the
// refocused video captioner on synthetic data.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wit/autodiff/checkpoint.hpp"
#include "wit/experiment/config.hpp"
#include "wit/metrics/token_files.hpp"
#include "wit/report/csv.hpp"
#include "wit/report/svg.hpp"

namespace fs = std::filesystem;
using namespace wit;
using experiment::ConfigError;
using experiment::ExperimentConfig;

namespace {

struct CommonFlags {
  std::string config, out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers, epochs, pretrain_epochs, hidden, batch_size;
  std::optional<double> lr, beta;
  std::optional<std::string> optimizer, phase;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool training) {
  cmd->add_option("--config", f.config, "JSON experiment config");
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_option("--seed", f.seed, "master seed (task, initialization, training)");
  cmd->add_option("--set", f.sets, "override a config field, e.g. --set train.dropout=0.3");
  if (!training) return;
  cmd->add_option("--workers", f.workers, "threads per batch (default 1)");
  cmd->add_option("--phase", f.phase, "pretrain | joint | freeze-retrain | scst");
  cmd->add_option("--epochs", f.epochs, "total epochs");
  cmd->add_option("--pretrain-epochs", f.pretrain_epochs, "step-1-only epochs");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--beta", f.beta, "weight of the refocus loss");
  cmd->add_option("--optimizer", f.optimizer, "sgd | adam");
  cmd->add_option("--hidden", f.hidden, "hidden size H");
  cmd->add_option("--batch-size", f.batch_size, "pairs per update");
}

ExperimentConfig resolve(const CommonFlags& f, const std::string& fallback_config = {}) {
  ExperimentConfig c;
  if (!f.config.empty()) c = experiment::load_config(f.config);
  else if (!fallback_config.empty() && fs::exists(fallback_config)) c = experiment::load_config(fallback_config);
  if (f.seed) c.seed = *f.seed;
  if (f.phase) c.phase = *f.phase;
  if (f.workers) c.train.workers = *f.workers;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.pretrain_epochs) c.train.pretrain_epochs = *f.pretrain_epochs;
  if (f.lr) c.train.learning_rate = *f.lr;
  if (f.beta) c.train.beta = *f.beta;
  if (f.optimizer) c.train.optimizer = *f.optimizer;
  if (f.hidden) c.model.hidden = *f.hidden;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  for (const auto& s : f.sets) experiment::apply_override(c, s);
  c.apply_seed();
  c.validate();
  return c;
}

void prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory " + out);
}

void echo_config(const ExperimentConfig& c, const std::string& out) {
  report::write_text((fs::path(out) / "config.json").string(), experiment::to_json(c).dump(2) + "\n");
}

std::string split_path(const std::string& dir, const std::string& split) {
  return (fs::path(dir) / (split + ".witd")).string();
}

video::Dataset load_split(const std::string& dir, const std::string& split) {
  const auto p = split_path(dir, split);
  if (!fs::exists(p)) throw std::runtime_error("missing dataset file " + p);
  return video::load_dataset(p);
}

ModelDims dims_for(const ExperimentConfig& c, const video::Dataset& d) {
  ModelDims m;
  m.channels = d.spec.C;
  m.audio = d.spec.C_a;
  m.hidden = c.model.hidden;
  m.refocus_dim = c.model.refocus_dim;
  m.attention_dim = c.model.attention_dim;
  m.vocab = d.vocab.size();
  return m;
}

Model load_model(const ExperimentConfig& c, const video::Dataset& d, const std::string& ckpt) {
  if (!fs::exists(ckpt)) throw std::runtime_error("missing checkpoint " + ckpt);
  Model m = Model::create(dims_for(c, d), c.seed);
  load_params(m.store, ckpt);
  return m;
}

nlohmann::json keyframes_json(const video::KeyFrameMap& k) { return nlohmann::json(k); }

video::KeyFrameMap read_keyframes(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(report::read_text(path));
  return j.get<video::KeyFrameMap>();
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const CommonFlags& f) {
  auto c = resolve(f);
  prepare_out(f.out);
  auto write = [&](const std::string& split, std::size_t count, std::uint64_t first) {
    if (count == 0) return;
    auto d = video::make_dataset(c.task, count, first, split + "-");
    video::save_dataset(d, split_path(f.out, split));
  };
  write("train", c.counts.train, 0);
  write("val", c.counts.val, 1'000'000);
  write("test", c.counts.test, 2'000'000);
  echo_config(c, f.out);
  std::printf("wrote %zu/%zu/%zu samples to %s\n", c.counts.train, c.counts.val, c.counts.test, f.out.c_str());
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& data, const std::string& checkpoint, const std::string& keyframes) {
  auto c = resolve(f);
  const auto train_set = load_split(data, "train");
  std::optional<video::Dataset> val;
  if (fs::exists(split_path(data, "val"))) val = load_split(data, "val");
  prepare_out(f.out);
  const fs::path out(f.out);
  fs::create_directories(out / "checkpoints");
  echo_config(c, f.out);

  Model model = Model::create(dims_for(c, train_set), c.seed);
  const bool needs_ckpt = c.phase == "freeze-retrain" || c.phase == "scst";
  if (needs_ckpt && checkpoint.empty()) throw ConfigError("--checkpoint is required for phase " + c.phase);
  const std::vector<video::VideoSample>* val_samples = val ? &val->samples : nullptr;

  if (c.phase == "scst") {
    model = load_model(c, train_set, checkpoint);
    video::KeyFrameMap keys;
    if (!keyframes.empty()) keys = read_keyframes(keyframes);
    TrainConfig tc = c.train;
    tc.learning_rate = c.scst.learning_rate;
    auto hist = scst_finetune(model, train_set.samples, scst_metric_from_name(c.scst.metric), tc, c.scst.epochs,
                              keyframes.empty() ? nullptr : &keys, val_samples);
    std::string csv = "epoch,mean_sample_reward,mean_greedy_reward,val_cider\n";
    for (const auto& e : hist)
      csv += std::to_string(e.epoch) + "," + report::fmt(e.mean_sample_reward) + "," + report::fmt(e.mean_greedy_reward) +
             "," + report::fmt(e.val_cider) + "\n";
    report::write_text((out / "scst_history.csv").string(), csv);
    save_params(model.store, (out / "final.witc").string());
    std::printf("scst: %zu epochs, final checkpoint %s\n", hist.size(), (out / "final.witc").string().c_str());
    return 0;
  }

  TrainConfig tc = c.train;
  if (c.phase == "pretrain") tc.epochs = std::min(tc.epochs, tc.pretrain_epochs);
  if (!checkpoint.empty() && c.phase != "freeze-retrain") load_params(model.store, checkpoint);
  save_params(model.store, (out / "checkpoints" / "init.witc").string());

  TrainHooks hooks;
  hooks.validation = val_samples;
  hooks.on_epoch_end = [&](const EpochStats& st, const Model& m) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.witc", st.epoch);
    save_params(m.store, (out / "checkpoints" / name).string());
    std::printf("epoch %zu [%c] xe1 %.4f xe2 %.4f reward %.4f alpha_key %.4f inside %.3f val_cider %.4f\n", st.epoch,
                st.phase, st.mean_xe1, st.mean_xe2, st.mean_reward, st.mean_alpha_key, st.keyframe_inside_event_fraction,
                st.val_cider);
    std::fflush(stdout);
  };

  TrainResult result;
  RewardLedger ledger;
  nlohmann::json summary = {{"phase", c.phase}};
  if (c.phase == "freeze-retrain") {
    const Model best = load_model(c, train_set, checkpoint);
    std::vector<const std::vector<video::VideoSample>*> extra;
    std::optional<video::Dataset> test;
    if (val) extra.push_back(&val->samples);
    if (fs::exists(split_path(data, "test"))) {
      test = load_split(data, "test");
      extra.push_back(&test->samples);
    }
    video::KeyFrameMap keys = predict_keyframes(best, train_set.samples);
    for (const auto* s : extra)
      for (auto& [id, k] : predict_keyframes(best, *s)) keys[id] = k;
    report::write_text((out / "keyframes.json").string(), keyframes_json(keys).dump(1) + "\n");
    hooks.key_overrides = &keys;
    result = train(model, train_set.samples, tc, ledger, hooks);
  } else {
    result = train(model, train_set.samples, tc, ledger, hooks);
  }

  report::write_history_csv((out / "history.csv").string(), result.history);
  save_params(model.store, (out / "final.witc").string());
  if (result.best) {
    save_params(result.best->store, (out / "best.witc").string());
    summary["best_epoch"] = result.best_epoch;
    summary["best_val_cider"] = result.best_val_cider;
  }
  nlohmann::json val_curve = nlohmann::json::array();
  for (const auto& e : result.history) val_curve.push_back(std::isnan(e.val_cider) ? nlohmann::json() : nlohmann::json(e.val_cider));
  summary["val_cider"] = val_curve;
  report::write_text((out / "summary.json").string(), summary.dump(2) + "\n");
  std::printf("trained %zu epochs, outputs in %s\n", result.history.size(), f.out.c_str());
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& data, const std::string& checkpoint, const std::string& split,
             const std::string& keyframes, bool step1_only) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const auto fallback = (fs::path(checkpoint).parent_path() / "config.json").string();
  auto c = resolve(f, fallback);
  const auto ds = load_split(data, split);
  Model m = load_model(c, ds, checkpoint);
  video::KeyFrameMap keys;
  EvalOptions eo;
  eo.keep_attention = true;
  eo.step1_only = step1_only;
  eo.max_steps = c.train.max_len + 1;
  if (!keyframes.empty()) {
    keys = read_keyframes(keyframes);
    eo.key_overrides = &keys;
  }
  const auto rep = evaluate(m, ds.samples, eo);
  prepare_out(f.out);
  const fs::path out(f.out);
  echo_config(c, f.out);
  report::write_text((out / "metrics.csv").string(), report::metrics_csv(rep));
  report::write_text((out / "refocus.csv").string(), report::refocus_csv(rep, ds.samples));
  report::write_text((out / "attention.csv").string(), report::attention_csv(rep));
  std::string caps = "video_id,i_key,key_inside_event,caption\n";
  for (const auto& v : rep.videos) caps += v.id + "," + std::to_string(v.i_key) + "," + (v.key_inside_event ? "1" : "0") + "," + ds.vocab.decode(v.caption) + "\n";
  report::write_text((out / "captions.csv").string(), caps);
  TokenFile cand_file;
  for (const auto& v : rep.videos) cand_file.emplace_back(v.id, std::vector<TokenSeq>{v.caption});
  report::write_text((out / "candidates.json").string(), token_file_json(cand_file).dump() + "\n");
  std::printf("%s: BLEU4 %.4f ROUGE-L %.4f CIDEr %.4f key-in-event %.3f (default %.3f) over %zu videos\n", split.c_str(),
              rep.bleu4, rep.rouge_l, rep.cider, rep.keyframe_inside_fraction, rep.default_inside_fraction, rep.count);
  return 0;
}

int cmd_report(const std::string& out, const std::string& history, const std::string& refocus, std::size_t max_videos) {
  if (history.empty() && refocus.empty()) throw ConfigError("report needs --history and/or --refocus");
  prepare_out(out);
  const fs::path o(out);
  if (!history.empty()) {
    const auto h = report::read_history_csv(history);
    report::Series xe1{"xe step 1", {}, {}}, xe2{"xe step 2", {}, {}}, r{"reward", {}, {}}, a{"alpha_key", {}, {}},
        in{"key inside event", {}, {}};
    for (const auto& e : h) {
      const double x = static_cast<double>(e.epoch);
      for (auto* s : {&xe1, &xe2, &r, &a, &in}) s->x.push_back(x);
      xe1.y.push_back(e.mean_xe1);
      xe2.y.push_back(e.mean_xe2);
      r.y.push_back(e.mean_reward);
      a.y.push_back(e.mean_alpha_key);
      in.y.push_back(e.keyframe_inside_event_fraction);
    }
    report::write_text((o / "loss_curves.svg").string(), report::line_chart("Cross-entropy per caption", {xe1, xe2}, "epoch", "mean xe"));
    report::write_text((o / "reward_curve.svg").string(), report::line_chart("Refocus reward", {r}, "epoch", "mean xe1 - xe2"));
    report::write_text((o / "keyframe_curve.svg").string(),
                       report::line_chart("Key frame statistics", {a, in}, "epoch", "fraction"));
  }
  if (!refocus.empty()) {
    const auto rows = report::parse_refocus_csv(report::read_text(refocus));
    std::vector<double> keyp;
    std::vector<report::BarStrip> strips;
    for (const auto& r : rows) {
      if (r.alpha.empty()) continue;
      keyp.push_back(r.alpha[r.key]);
      if (strips.size() < max_videos) strips.push_back({r.video, r.alpha, r.key, r.in_event});
    }
    report::write_text((o / "alpha_key_histogram.svg").string(),
                       report::histogram("alpha at the chosen key frame", keyp, 20, 0.0, 1.0, "alpha_key"));
    report::write_text((o / "refocus_weights.svg").string(),
                       report::bar_strips("Refocus weights (red: key frame, shaded: event)", strips));
  }
  std::printf("report written to %s\n", out.c_str());
  return 0;
}

// One line: bleu4,rouge_l,cider,count
int cmd_score(const std::string& candidates, const std::string& references, const std::string& out) {
  const auto s = score_token_files(read_token_file(candidates), read_token_file(references));
  const std::string line =
      report::fmt(s.bleu4) + "," + report::fmt(s.rouge_l) + "," + report::fmt(s.cider) + "," + std::to_string(s.count) + "\n";
  if (!out.empty()) report::write_text(out, line);
  std::fputs(line.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wit: refocused video captioning on synthetic data"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f;
  auto* gen = app.add_subcommand("gen-data", "generate train/val/test datasets");
  add_common(gen, gen_f, false);

  std::string data, checkpoint, keyframes, split = "test";
  auto* tr = app.add_subcommand("train", "train a model");
  add_common(tr, train_f, true);
  tr->add_option("--data", data, "dataset directory from gen-data")->required();
  tr->add_option("--checkpoint", checkpoint, "initial weights; the best model for freeze-retrain and scst");
  tr->add_option("--keyframes", keyframes, "frozen key frames (scst on a frozen-key model)");

  std::string edata, eckpt, ekeys;
  bool step1_only = false;
  auto* ev = app.add_subcommand("eval", "score greedy captions on a split");
  add_common(ev, eval_f, false);
  ev->add_option("--data", edata, "dataset directory")->required();
  ev->add_option("--checkpoint", eckpt, "model weights")->required();
  ev->add_option("--split", split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--keyframes", ekeys, "frozen key frames JSON");
  ev->add_flag("--step1-only", step1_only, "caption from the first encoding pass");

  std::string rout, rhist, rref;
  std::size_t rmax = 12;
  auto* rep = app.add_subcommand("report", "render SVG plots from CSV outputs");
  rep->add_option("--out", rout, "output directory")->required();
  rep->add_option("--history", rhist, "history.csv from train");
  rep->add_option("--refocus", rref, "refocus.csv from eval");
  rep->add_option("--videos", rmax, "videos in the refocus weight plot");

  std::string scand, sref, sout;
  auto* sc = app.add_subcommand("score", "score candidate token sequences against references");
  sc->add_option("--candidates", scand, "JSON token file, one caption per sample")->required();
  sc->add_option("--references", sref, "JSON token file or dataset sidecar")->required();
  sc->add_option("--out", sout, "also write the CSV line here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*gen) return cmd_gen_data(gen_f);
    if (*tr) return cmd_train(train_f, data, checkpoint, keyframes);
    if (*ev) return cmd_eval(eval_f, edata, eckpt, split, ekeys, step1_only);
    if (*rep) return cmd_report(rout, rhist, rref, rmax);
    if (*sc) return cmd_score(scand, sref, sout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
