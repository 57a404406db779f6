#include "qv/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "qv/audio.hpp"
#include "qv/cache.hpp"
#include "qv/common.hpp"
#include "qv/dataset.hpp"
#include "qv/features.hpp"
#include "qv/metrics.hpp"
#include "qv/model.hpp"
#include "qv/qv_block.hpp"

namespace qv::cli {

namespace fs = std::filesystem;

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DataError("write failed for " + path);
}

void ensure_writable(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw ContractError("output " + path + " already exists; pass --force to overwrite");
}

// Every command writes a manifest next to its primary output: the resolved
// configuration plus enough provenance to reproduce the run.
struct Manifest {
  nlohmann::ordered_json j;

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    j["tool"] = "qvaudio";
    j["version"] = qv::kVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = nlohmann::ordered_json::object();
    j["seeds"] = nlohmann::ordered_json::object();
    j["inputs"] = nlohmann::ordered_json::array();
    j["outputs"] = nlohmann::ordered_json::array();
    j["started_at"] = iso_now();
  }

  void write(const std::string& path) {
    j["finished_at"] = iso_now();
    write_text(path, j.dump(2) + "\n");
  }
};

int env_threads() {
  const char* v = std::getenv("QV_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

struct SharedFlags {
  bool force = false;
};

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  int n_per_class = 100;
  uint64_t seed = 42;
  bool force = false;
};

void run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
  const fs::path dir(a.out_dir);
  const fs::path wav_dir = dir / "wav";
  const std::string proto_train = (dir / "protocol_train.txt").string();
  const std::string proto_eval = (dir / "protocol_eval.txt").string();
  ensure_writable(proto_train, a.force);
  ensure_writable(proto_eval, a.force);
  fs::create_directories(wav_dir);

  Manifest mf("synth", argv);
  mf.j["config"]["n_per_class"] = a.n_per_class;
  mf.j["config"]["out"] = a.out_dir;
  mf.j["seeds"]["seed"] = a.seed;

  Dataset ds = synth_dataset(a.n_per_class, a.seed);
  std::vector<TrialEntry> train_entries, eval_entries;
  for (const auto& e : ds.entries) {
    write_wav((wav_dir / (e.utterance_id + ".wav")).string(), ds.clip(e.utterance_id));
    (e.split == Split::train ? train_entries : eval_entries).push_back(e);
  }
  write_text(proto_train, format_protocol(train_entries));
  write_text(proto_eval, format_protocol(eval_entries));

  mf.j["outputs"] = {wav_dir.string(), proto_train, proto_eval};
  mf.write((dir / "manifest.json").string());
  std::cout << "synth: wrote " << ds.entries.size() << " clips (" << train_entries.size()
            << " train, " << eval_entries.size() << " eval) under " << a.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string in_dir, protocol, features = "mel", out;
  bool force = false;
};

void run_extract(const ExtractArgs& a, const std::vector<std::string>& argv) {
  ensure_writable(a.out, a.force);
  const FeatureKind kind = feature_kind_from_string(a.features);
  const FeatureConfig cfg;

  Manifest mf("extract", argv);
  mf.j["config"]["in"] = a.in_dir;
  mf.j["config"]["protocol"] = a.protocol;
  mf.j["config"]["features"] = a.features;
  mf.j["config"]["out"] = a.out;
  mf.j["config"]["sample_rate"] = cfg.sample_rate;
  mf.j["config"]["win_length"] = cfg.win_length;
  mf.j["config"]["hop_length"] = cfg.hop_length;
  mf.j["config"]["n_mels"] = cfg.n_mels;
  mf.j["config"]["n_mfcc"] = cfg.n_mfcc;
  mf.j["config"]["out_size"] = {cfg.out_height, cfg.out_width};
  mf.j["inputs"] = {a.in_dir, a.protocol};

  const auto entries = parse_protocol(a.protocol, Split::train);
  std::vector<FeatureRecord> records;
  std::vector<std::string> missing;
  for (const auto& e : entries) {
    const fs::path wav = fs::path(a.in_dir) / (e.utterance_id + ".wav");
    if (!fs::exists(wav)) {
      missing.push_back(e.utterance_id);
      continue;
    }
    AudioClip clip = read_wav(wav.string());
    if (clip.sample_rate != cfg.sample_rate) clip = resample(clip, cfg.sample_rate);
    FeatureRecord rec;
    rec.label = e.label;
    rec.image = extract(clip, kind, cfg);
    records.push_back(std::move(rec));
  }
  if (records.empty())
    throw DataError("extract: no protocol entry matched an audio file under " + a.in_dir);
  write_cache(a.out, records);
  mf.j["outputs"].push_back(a.out);

  if (!missing.empty()) {
    std::string report;
    for (const auto& id : missing) report += id + "\n";
    const std::string side = a.out + ".missing.txt";
    write_text(side, report);
    mf.j["outputs"].push_back(side);
    std::cerr << "extract: " << missing.size() << " protocol entries had no audio (listed in "
              << side << ")\n";
  }
  mf.write(a.out + ".manifest.json");
  std::cout << "extract: wrote " << records.size() << " records to " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string cache, arch = "qv-cnn", out;
  int batch = 32;
  int epochs = 100;
  uint64_t seed = 0;
  double lr = 1e-4;
  bool class_weights = false;
  std::string token_mode = "patch";
  int qv_depth = 1;
  bool force = false;
};

void run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  ensure_writable(a.out, a.force);
  const auto records = read_cache(a.cache);
  if (records.empty()) throw DataError("train: cache " + a.cache + " is empty");

  ModelConfig mcfg;
  mcfg.arch = arch_from_string(a.arch);
  mcfg.token_mode = token_mode_from_string(a.token_mode);
  mcfg.qv.depth = a.qv_depth;
  mcfg.in_channels = records[0].image.channels;
  mcfg.in_h = records[0].image.height;
  mcfg.in_w = records[0].image.width;
  mcfg.seed = a.seed;

  TrainConfig tcfg;
  tcfg.batch_size = a.batch;
  tcfg.epochs = a.epochs;
  tcfg.lr = a.lr;
  tcfg.seed = a.seed;
  tcfg.class_weighting = a.class_weights;

  Manifest mf("train", argv);
  mf.j["config"]["arch"] = a.arch;
  mf.j["config"]["batch"] = a.batch;
  mf.j["config"]["epochs"] = a.epochs;
  mf.j["config"]["lr"] = a.lr;
  mf.j["config"]["class_weights"] = a.class_weights;
  mf.j["config"]["token_mode"] = a.token_mode;
  mf.j["config"]["qv_depth"] = a.qv_depth;
  mf.j["config"]["model"] = nlohmann::json::parse(mcfg.to_json());
  mf.j["seeds"]["seed"] = a.seed;
  mf.j["inputs"] = {a.cache};

  auto model = build_model(mcfg);
  const TrainHistory history = train(*model, records, tcfg);
  save_checkpoint(*model, a.out);
  write_text(a.out + ".history.csv", history.to_csv());

  mf.j["outputs"] = {a.out, a.out + ".history.csv"};
  mf.write(a.out + ".manifest.json");
  const auto& last = history.epochs.back();
  std::cout << "train: " << a.arch << " epochs=" << a.epochs << " final loss=" << last.loss
            << " acc=" << last.accuracy << " -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string cache, ckpt, out;
  bool force = false;
};

void run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  ensure_writable(a.out, a.force);
  const auto records = read_cache(a.cache);
  if (records.empty()) throw DataError("eval: cache " + a.cache + " is empty");
  auto model = load_checkpoint(a.ckpt);

  Manifest mf("eval", argv);
  mf.j["config"]["cache"] = a.cache;
  mf.j["config"]["ckpt"] = a.ckpt;
  mf.j["inputs"] = {a.cache, a.ckpt};

  const ScoreSet set = score_set(*model, records);
  const EvalReport rep = report(set);
  write_text(a.out, report_to_json(rep));
  write_text(a.out + ".confusion.csv", confusion_csv(rep.confusion));

  mf.j["outputs"] = {a.out, a.out + ".confusion.csv"};
  mf.write(a.out + ".manifest.json");
  std::cout << "eval: n=" << records.size() << " accuracy_argmax=" << rep.accuracy_argmax
            << " eer=" << rep.eer << " -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// waves
// ---------------------------------------------------------------------------

struct WavesArgs {
  std::string in, features = "mel", out_dir;
  bool squared = false;
  bool force = false;
};

void run_waves(const WavesArgs& a, const std::vector<std::string>& argv) {
  const FeatureKind kind = feature_kind_from_string(a.features);
  const FeatureConfig cfg;
  if (!a.force && fs::exists(fs::path(a.out_dir) / "wave_x_+1.pgm"))
    throw ContractError("output directory " + a.out_dir +
                        " already holds wave maps; pass --force to overwrite");

  Manifest mf("waves", argv);
  mf.j["config"]["in"] = a.in;
  mf.j["config"]["features"] = a.features;
  mf.j["config"]["squared"] = a.squared;
  mf.j["inputs"] = {a.in};

  AudioClip clip = read_wav(a.in);
  if (clip.sample_rate != cfg.sample_rate) clip = resample(clip, cfg.sample_rate);
  const FeatureImage feat = extract(clip, kind, cfg);

  std::vector<float> vals(feat.data.begin(), feat.data.end());
  Tensor img({1, 1, feat.height, feat.width}, std::move(vals));
  QVConfig qcfg;
  qcfg.in_channels = 1;
  WaveStack stack = basis_waves(img, qcfg);
  if (a.squared) stack = magnitude_square(stack);
  const auto files = render_waves(stack, a.out_dir);

  for (const auto& f : files) mf.j["outputs"].push_back(f);
  mf.write((fs::path(a.out_dir) / "manifest.json").string());
  std::cout << "waves: wrote " << files.size() << " maps to " << a.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string cache, eval_cache, out_dir;
  std::vector<std::string> archs{"cnn", "qv-cnn", "vit", "qv-vit"};
  std::vector<int> batches{8, 16, 32, 64};
  int epochs = 100;
  uint64_t seed = 0;
  double lr = 1e-4;
  bool force = false;
};

std::string cache_feature_name(const std::string& cache_path) {
  // The extract manifest records the feature kind; fall back to "unknown"
  // when the cache arrived without one.
  std::ifstream f(cache_path + ".manifest.json");
  if (!f) return "unknown";
  try {
    nlohmann::json j;
    f >> j;
    return j.at("config").at("features").get<std::string>();
  } catch (...) {
    return "unknown";
  }
}

void run_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  const fs::path dir(a.out_dir);
  const std::string summary_path = (dir / "summary.csv").string();
  ensure_writable(summary_path, a.force);
  fs::create_directories(dir);
  const std::string eval_cache = a.eval_cache.empty() ? a.cache : a.eval_cache;

  Manifest mf("sweep", argv);
  mf.j["config"]["archs"] = a.archs;
  mf.j["config"]["batches"] = a.batches;
  mf.j["config"]["epochs"] = a.epochs;
  mf.j["config"]["lr"] = a.lr;
  mf.j["config"]["eval_cache"] = eval_cache;
  mf.j["seeds"]["seed"] = a.seed;
  mf.j["inputs"] = {a.cache, eval_cache};

  const auto train_records = read_cache(a.cache);
  const auto eval_records = read_cache(eval_cache);
  if (train_records.empty()) throw DataError("sweep: cache " + a.cache + " is empty");
  const std::string feature = cache_feature_name(a.cache);

  struct Cell {
    std::string arch;
    int batch = 0;
    std::string status = "ok";
    double accuracy = 0.0, eer_value = 0.0;
  };
  std::vector<Cell> cells;
  for (const auto& arch : a.archs)
    for (int b : a.batches) cells.push_back({arch, b, "", 0.0, 0.0});

  auto run_cell = [&](Cell& cell) {
    try {
      ModelConfig mcfg;
      mcfg.arch = arch_from_string(cell.arch);
      mcfg.in_channels = train_records[0].image.channels;
      mcfg.in_h = train_records[0].image.height;
      mcfg.in_w = train_records[0].image.width;
      mcfg.seed = a.seed;
      TrainConfig tcfg;
      tcfg.batch_size = cell.batch;
      tcfg.epochs = a.epochs;
      tcfg.lr = a.lr;
      tcfg.seed = a.seed;

      auto model = build_model(mcfg);
      const TrainHistory history = train(*model, train_records, tcfg);
      const std::string stem = cell.arch + "_b" + std::to_string(cell.batch);
      save_checkpoint(*model, (dir / (stem + ".qvck")).string());
      write_text((dir / (stem + ".history.csv")).string(), history.to_csv());

      const EvalReport rep = report(score_set(*model, eval_records));
      cell.accuracy = rep.accuracy_argmax;
      cell.eer_value = rep.eer;
      cell.status = "ok";
    } catch (const std::exception& e) {
      std::string msg = e.what();
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ' ';
      cell.status = "error: " + msg;
    }
  };

  const int workers = std::min<int>(env_threads(), static_cast<int>(cells.size()));
  if (workers <= 1) {
    for (auto& cell : cells) run_cell(cell);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1))
          run_cell(cells[i]);
      });
    for (auto& t : pool) t.join();
  }

  std::ostringstream csv;
  csv << "features,classifier,batch_size,epochs,accuracy_pct,eer_pct,status\n";
  for (const auto& c : cells) {
    csv << feature << "," << c.arch << "," << c.batch << "," << a.epochs << ",";
    if (c.status == "ok") {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f", 100.0 * c.accuracy, 100.0 * c.eer_value);
      csv << buf;
    } else {
      csv << ",";
    }
    csv << "," << c.status << "\n";
  }
  write_text(summary_path, csv.str());
  mf.j["outputs"] = {summary_path};
  mf.write((dir / "manifest.json").string());
  std::cout << "sweep: " << cells.size() << " cells -> " << summary_path << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"qvaudio: wave-feature front-end and spoofed-speech classifiers"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate the deterministic synthetic dataset");
  synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("--n", synth_args.n_per_class, "Clips per class")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_flag("--force", synth_args.force, "Overwrite existing outputs");

  ExtractArgs ex_args;
  auto* extract = app.add_subcommand("extract", "Extract a feature cache from audio + protocol");
  extract->add_option("--in", ex_args.in_dir, "Directory of <utterance>.wav files")->required();
  extract->add_option("--protocol", ex_args.protocol, "Protocol file")->required();
  extract->add_option("--features", ex_args.features, "Feature kind")
      ->check(CLI::IsMember({"stft", "mel", "mfcc"}));
  extract->add_option("--out", ex_args.out, "Output cache (.qvfc)")->required();
  extract->add_flag("--force", ex_args.force, "Overwrite existing outputs");

  TrainArgs tr_args;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on a feature cache");
  train_cmd->add_option("--cache", tr_args.cache, "Feature cache (.qvfc)")->required();
  train_cmd->add_option("--arch", tr_args.arch, "Architecture")
      ->check(CLI::IsMember({"cnn", "qv-cnn", "vit", "qv-vit"}));
  train_cmd->add_option("--batch", tr_args.batch, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", tr_args.epochs, "Epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr_args.seed, "Init/shuffle seed");
  train_cmd->add_option("--lr", tr_args.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--class-weights", tr_args.class_weights,
                      "Weight the loss by inverse class frequency");
  train_cmd->add_option("--token-mode", tr_args.token_mode, "ViT tokenization")
      ->check(CLI::IsMember({"patch", "channel"}));
  train_cmd->add_option("--qv-depth", tr_args.qv_depth, "QV branch depth (1 or 3)")
      ->check(CLI::IsMember({1, 3}));
  train_cmd->add_option("--out", tr_args.out, "Output checkpoint (.qvck)")->required();
  train_cmd->add_flag("--force", tr_args.force, "Overwrite existing outputs");

  EvalArgs ev_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a cache with a checkpoint");
  eval_cmd->add_option("--cache", ev_args.cache, "Feature cache (.qvfc)")->required();
  eval_cmd->add_option("--ckpt", ev_args.ckpt, "Checkpoint (.qvck)")->required();
  eval_cmd->add_option("--out", ev_args.out, "Report JSON path")->required();
  eval_cmd->add_flag("--force", ev_args.force, "Overwrite existing outputs");

  WavesArgs wv_args;
  auto* waves = app.add_subcommand("waves", "Render basis wave maps for one clip");
  waves->add_option("--in", wv_args.in, "Input WAV")->required();
  waves->add_option("--features", wv_args.features, "Feature kind")
      ->check(CLI::IsMember({"stft", "mel", "mfcc"}));
  waves->add_option("--out", wv_args.out_dir, "Output directory")->required();
  waves->add_flag("--squared", wv_args.squared, "Render |psi|^2 instead of psi");
  waves->add_flag("--force", wv_args.force, "Overwrite existing outputs");

  SweepArgs sw_args;
  auto* sweep = app.add_subcommand("sweep", "Train/eval a grid of archs x batch sizes");
  sweep->add_option("--cache", sw_args.cache, "Training cache (.qvfc)")->required();
  sweep->add_option("--eval-cache", sw_args.eval_cache,
                    "Evaluation cache (defaults to the training cache)");
  sweep->add_option("--archs", sw_args.archs, "Architectures")->delimiter(',');
  sweep->add_option("--batches", sw_args.batches, "Batch sizes")->delimiter(',');
  sweep->add_option("--epochs", sw_args.epochs, "Epochs per cell")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sw_args.seed, "Seed for every cell");
  sweep->add_option("--lr", sw_args.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sw_args.out_dir, "Output directory")->required();
  sweep->add_flag("--force", sw_args.force, "Overwrite existing outputs");

  std::vector<std::string> argv_copy = args;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) run_synth(synth_args, argv_copy);
    if (*extract) run_extract(ex_args, argv_copy);
    if (*train_cmd) run_train(tr_args, argv_copy);
    if (*eval_cmd) run_eval(ev_args, argv_copy);
    if (*waves) run_waves(wv_args, argv_copy);
    if (*sweep) run_sweep(sw_args, argv_copy);
    return 0;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace qv::cli
