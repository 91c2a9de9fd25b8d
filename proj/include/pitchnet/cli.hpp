#ifndef PITCHNET_CLI_HPP
#define PITCHNET_CLI_HPP

// Command-line front end. Exit codes: 0 success, 1 usage error (usage text on
// the error stream), 2 runtime error (one line starting with "error:").

#include <atomic>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pitchnet/checkpoint.hpp"
#include "pitchnet/dataset.hpp"
#include "pitchnet/experiments.hpp"
#include "pitchnet/generate.hpp"
#include "pitchnet/midi.hpp"
#include "pitchnet/train.hpp"

namespace pitchnet::cli {

namespace detail {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string config_value(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + config_value(v[i]);
    return out;
  }
  return v.dump();
}

// Flat JSON object whose keys are long flag names. Values only fill options
// that were not given on the command line.
inline void apply_config(CLI::App& cmd, const std::string& path) {
  if (path.empty()) return;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw UsageError("config file " + path + " must hold a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "config") continue;
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (!opt) throw UsageError("unknown key '" + key + "' in config file " + path);
    if (opt->count() > 0) continue;
    try {
      opt->add_result(config_value(value));
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

struct TrainFlags {
  std::string corpus, vocab, out, resume;
  std::uint64_t epochs = 100;
  std::size_t hidden = 512, dense = 256, batch = 64, window = 80, stride = 1;
  double dropout = 0.3, lr = 0.001;
  std::uint64_t seed = 0, patience = 0;
  bool keep_best_only = false, dense_relu = false;
};

inline const auto kDropoutRange = CLI::Validator(
    [](std::string& s) -> std::string {
      double v = 0;
      try {
        v = std::stod(s);
      } catch (...) {
        return "not a number: " + s;
      }
      return v >= 0.0 && v < 1.0 ? std::string() : "dropout must lie in [0, 1)";
    },
    "[0,1)");

inline void add_hyperparameters(CLI::App& cmd, TrainFlags& f, bool with_hidden) {
  cmd.add_option("--epochs", f.epochs, "Total number of epochs")->check(CLI::NonNegativeNumber);
  if (with_hidden) cmd.add_option("--hidden", f.hidden, "LSTM width (all three layers)")->check(CLI::PositiveNumber);
  cmd.add_option("--dense", f.dense, "Width of the first dense layer")->check(CLI::PositiveNumber);
  cmd.add_option("--dropout", f.dropout, "Dropout rate")->check(kDropoutRange);
  cmd.add_option("--batch", f.batch, "Mini-batch size")->check(CLI::PositiveNumber);
  cmd.add_option("--lr", f.lr, "RMSProp learning rate")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", f.seed, "Random seed");
  cmd.add_option("--window", f.window, "Input window length")->check(CLI::PositiveNumber);
  cmd.add_option("--stride", f.stride, "Window stride")->check(CLI::PositiveNumber);
  cmd.add_option("--patience", f.patience, "Stop after N epochs without improvement (0 = off)");
  cmd.add_flag("--keep-best-only", f.keep_best_only, "Keep only best.ckpt and last.ckpt");
  cmd.add_flag("--dense-relu", f.dense_relu, "ReLU on the first dense layer");
}

inline TrainConfig to_train_config(const TrainFlags& f, const std::atomic<bool>* stop, std::ostream* progress) {
  TrainConfig c;
  c.corpus = f.corpus;
  c.vocab = f.vocab;
  c.out_dir = f.out;
  c.resume = f.resume;
  c.epochs = f.epochs;
  c.batch_size = f.batch;
  c.stride = f.stride;
  c.seed = f.seed;
  c.patience = f.patience;
  c.keep_best_only = f.keep_best_only;
  c.optimizer.learning_rate = f.lr;
  c.spec.lstm_width = f.hidden;
  c.spec.dense_width = f.dense;
  c.spec.dropout = f.dropout;
  c.spec.window_len = f.window;
  c.spec.dense_relu = f.dense_relu;
  c.stop = stop;
  c.progress = progress;
  return c;
}

inline void require_path(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, std::string(what) + " not found: " + path);
}

inline std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> widths;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      widths.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw UsageError("--widths expects comma-separated positive integers, got '" + text + "'");
    }
  }
  if (widths.empty()) throw UsageError("--widths is empty");
  return widths;
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                   const std::atomic<bool>* stop = nullptr) {
  using namespace detail;
  CLI::App app{"Next-pitch LSTM training and MIDI generation", "pitchnet"};
  app.require_subcommand(1);

  std::string config_path;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON file of flag values (flags override it)")->check(CLI::ExistingFile);
  };

  // ingest
  std::string ingest_corpus, ingest_out;
  std::size_t ingest_window = 80, ingest_stride = 1;
  auto* ingest = app.add_subcommand("ingest", "Build the vocabulary and report corpus statistics");
  ingest->add_option("--corpus", ingest_corpus, "Directory of MIDI files (or one file)")->required();
  ingest->add_option("--out", ingest_out, "Vocabulary file to write")->required();
  ingest->add_option("--window", ingest_window, "Input window length")->check(CLI::PositiveNumber);
  ingest->add_option("--stride", ingest_stride, "Window stride")->check(CLI::PositiveNumber);
  add_config(ingest);

  // train
  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train the network, checkpointing every epoch");
  train_cmd->add_option("--corpus", tf.corpus, "Directory of MIDI files (or one file)")->required();
  train_cmd->add_option("--vocab", tf.vocab, "Vocabulary file from `ingest` (built from the corpus if omitted)");
  train_cmd->add_option("--out", tf.out, "Output directory for checkpoints and loss.csv")->required();
  train_cmd->add_option("--resume", tf.resume, "Checkpoint to continue from");
  add_hyperparameters(*train_cmd, tf, true);
  add_config(train_cmd);

  // generate
  std::string gen_ckpt, gen_vocab, gen_corpus, gen_out, gen_sample = "argmax", gen_tokens;
  std::size_t gen_length = 200;
  double gen_temp = 1.0;
  std::uint64_t gen_seed = 0;
  std::optional<std::size_t> gen_seed_index;
  bool gen_include_seed = false;
  auto* generate = app.add_subcommand("generate", "Generate a MIDI piece from a checkpoint");
  generate->add_option("--checkpoint", gen_ckpt, "Checkpoint file (usually best.ckpt)")->required();
  generate->add_option("--vocab", gen_vocab, "Vocabulary file used in training")->required();
  generate->add_option("--corpus", gen_corpus, "Corpus to draw the seed window from")->required();
  generate->add_option("--out", gen_out, "MIDI file to write")->required();
  generate->add_option("--length", gen_length, "Number of tokens to generate")->check(CLI::PositiveNumber);
  generate->add_option("--sample", gen_sample, "argmax or temp")->check(CLI::IsMember({"argmax", "temp"}));
  generate->add_option("--temp", gen_temp, "Sampling temperature")->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen_seed, "Random seed for seed selection and sampling");
  generate->add_option("--seed-index", gen_seed_index, "Use this corpus window as the seed");
  generate->add_option("--tokens", gen_tokens, "Also write the token list here, one per line");
  generate->add_flag("--include-seed", gen_include_seed, "Prepend the seed window to the output");
  add_config(generate);

  // sweep
  TrainFlags sf;
  std::string sweep_widths = "32,64,128,256";
  auto* sweep = app.add_subcommand("sweep", "Compare loss curves across LSTM widths");
  sweep->add_option("--corpus", sf.corpus, "Directory of MIDI files (or one file)")->required();
  sweep->add_option("--vocab", sf.vocab, "Vocabulary file (built from the corpus if omitted)");
  sweep->add_option("--widths", sweep_widths, "Comma-separated LSTM widths");
  sweep->add_option("--out", sf.out, "Output directory")->required();
  add_hyperparameters(*sweep, sf, false);
  add_config(sweep);

  // inspect
  std::string inspect_ckpt;
  auto* inspect = app.add_subcommand("inspect", "Print checkpoint metadata");
  inspect->add_option("--checkpoint", inspect_ckpt, "Checkpoint file")->required();

  // midi-dump
  std::string dump_file;
  auto* dump = app.add_subcommand("midi-dump", "List the events of a MIDI file");
  dump->add_option("file", dump_file, "MIDI file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    for (auto* cmd : {ingest, train_cmd, generate, sweep}) {
      if (cmd->parsed()) apply_config(*cmd, config_path);
    }
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << app.get_subcommands().front()->help();
    return 1;
  }

  try {
    if (ingest->parsed()) {
      require_path(ingest_corpus, "corpus path");
      const WindowSpec window{ingest_window, ingest_stride};
      validate(window);
      const auto pieces = load_corpus(ingest_corpus);
      const auto vocab = build_vocabulary(token_lists(pieces));
      const auto sequences = encode_corpus(pieces, vocab);
      std::size_t tokens = 0, windows = 0;
      for (const auto& s : sequences) {
        tokens += s.size();
        if (s.size() > window.window_len) windows += (s.size() - window.window_len - 1) / window.stride + 1;
      }
      save_vocabulary(ingest_out, vocab);
      out << "files " << pieces.size() << "\ntokens " << tokens << "\nvocabulary " << vocab.size() << "\nwindows "
          << windows << "\n";
      if (windows == 0) err << "warning: no piece is longer than the window length " << window.window_len << "\n";
    } else if (train_cmd->parsed()) {
      require_path(tf.corpus, "corpus path");
      if (!tf.vocab.empty()) require_path(tf.vocab, "vocabulary file");
      if (!tf.resume.empty()) require_path(tf.resume, "resume checkpoint");
      const auto report = train(to_train_config(tf, stop, &out));
      if (report.best_epoch) {
        out << "best epoch " << report.best_epoch << " loss " << format_loss(report.best_loss) << " -> "
            << report.best_checkpoint.string() << "\n";
      }
      if (report.interrupted) out << "training interrupted; resume with --resume " << report.last_checkpoint.string() << "\n";
    } else if (generate->parsed()) {
      require_path(gen_ckpt, "checkpoint");
      require_path(gen_vocab, "vocabulary file");
      require_path(gen_corpus, "corpus path");
      GenerationConfig gc;
      gc.checkpoint = gen_ckpt;
      gc.vocab = gen_vocab;
      gc.corpus = gen_corpus;
      gc.length = gen_length;
      gc.sampling = gen_sample == "temp" ? Sampling::with_temperature(gen_temp) : Sampling::argmax();
      gc.seed_choice.index = gen_seed_index;
      gc.rng_seed = gen_seed;
      gc.include_seed = gen_include_seed;
      const auto result = generate_sequence(gc);
      emit_piece(result.output(gc.include_seed), result.vocab, gen_out, gen_tokens);
      out << "wrote " << result.output(gc.include_seed).size() << " tokens to " << gen_out << "\n";
    } else if (sweep->parsed()) {
      require_path(sf.corpus, "corpus path");
      SweepConfig sc;
      sc.base = to_train_config(sf, stop, nullptr);
      sc.widths = parse_widths(sweep_widths);
      const auto result = run_hidden_size_sweep(sc, &out);
      out << "wrote " << result.csv.string() << "\n";
    } else if (inspect->parsed()) {
      require_path(inspect_ckpt, "checkpoint");
      const auto ck = load_checkpoint(inspect_ckpt);
      out << "epoch " << ck.epoch << (ck.partial ? " (partial)" : "") << "\n"
          << "loss " << format_loss(ck.loss) << "\n"
          << "best_epoch " << ck.best_epoch << "\nbest_loss " << format_loss(ck.best_loss) << "\n"
          << "spec " << to_json(ck.spec).dump() << "\n"
          << "window " << ck.window.window_len << " stride " << ck.window.stride << "\n"
          << "vocab_hash " << ck.vocab_hash << "\n"
          << "parameters " << ck.params.count() << "\n";
    } else if (dump->parsed()) {
      require_path(dump_file, "MIDI file");
      out << midi::dump(midi::parse_midi(read_file(dump_file)));
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr,
                   const std::atomic<bool>* stop = nullptr) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err, stop);
}

}  // namespace pitchnet::cli

#endif  // PITCHNET_CLI_HPP
