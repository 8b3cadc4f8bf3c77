#include "plotcast/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include "plotcast/random.hpp"

namespace plotcast {

namespace fs = std::filesystem;

std::string to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::input: return "input";
    case ErrorCategory::missing_artifact: return "missing_artifact";
    case ErrorCategory::training: return "training";
    case ErrorCategory::external: return "external";
    case ErrorCategory::internal: return "internal";
  }
  return "internal";
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage:
    case ErrorCategory::config: return 2;
    case ErrorCategory::input: return 3;
    case ErrorCategory::missing_artifact: return 4;
    case ErrorCategory::training: return 5;
    case ErrorCategory::external: return 6;
    case ErrorCategory::internal: return 1;
  }
  return 1;
}

void RunContext::emit(const std::string& stage, Json fields) const {
  if (!progress) return;
  fields["stage"] = stage;
  progress(fields);
}

fs::path resolve_run_dir(const Json& config, const std::optional<fs::path>& explicit_dir, const fs::path& root) {
  if (explicit_dir) return *explicit_dir;
  return root / config_hash(config);
}

namespace {

constexpr const char* kSplits[] = {"train", "valid", "test"};

fs::path require(const RunContext& ctx, const std::string& name, const std::string& stage) {
  const fs::path p = ctx.artifact(name);
  if (!fs::exists(p))
    throw PipelineError(ErrorCategory::missing_artifact,
                        p.string() + " not found; run `plotcast " + stage + "` first");
  return p;
}

Json read_json_file(const fs::path& p) {
  try {
    return Json::parse(read_text(p));
  } catch (const Json::parse_error& e) {
    throw PipelineError(ErrorCategory::input, p.string() + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& p, const Json& j) { write_text_atomic(p, j.dump(2) + "\n"); }

template <typename T, typename F>
std::vector<T> read_records(const fs::path& p, F&& parse) {
  std::vector<T> out;
  for (const auto& j : read_jsonl(p)) out.push_back(parse(j));
  return out;
}

template <typename T, typename F>
void write_records(const fs::path& p, const std::vector<T>& items, F&& dump) {
  std::vector<Json> lines;
  lines.reserve(items.size());
  for (const auto& item : items) lines.push_back(dump(item));
  write_jsonl(p, lines);
}

std::vector<StoryBlock> load_blocks(const RunContext& ctx, const std::string& split) {
  return read_records<StoryBlock>(require(ctx, "blocks_" + split + ".jsonl", "ingest"), block_from_json);
}

std::vector<PlotSummary> load_plots(const RunContext& ctx, const std::string& split) {
  return read_records<PlotSummary>(require(ctx, "plots_" + split + ".jsonl", "extract-plots"), plot_from_json);
}

std::vector<FrameVector> load_frames(const RunContext& ctx, const std::string& split) {
  return read_records<FrameVector>(require(ctx, "frames_" + split + ".jsonl", "frames"), frame_vector_from_json);
}

Json vocab_to_json(const Vocab& v) {
  return Json{{"min_freq", v.min_freq()}, {"hash", hex64(v.hash())}, {"tokens", v.tokens()}};
}

Vocab load_vocab(const RunContext& ctx) {
  const Json j = read_json_file(require(ctx, "vocab.json", "ingest"));
  auto tokens = j.at("tokens").get<std::vector<std::string>>();
  return Vocab(std::move(tokens), j.value("min_freq", 1));
}

CorpusSplit load_split(const RunContext& ctx) {
  const Json j = read_json_file(require(ctx, "splits.json", "ingest"));
  return {j.at("train").get<std::vector<std::string>>(), j.at("valid").get<std::vector<std::string>>(),
          j.at("test").get<std::vector<std::string>>()};
}

StopwordList load_stopwords(const Json& config) {
  const fs::path p = data_path(config, "stopwords");
  if (!p.empty() && fs::exists(p)) return StopwordList::load(p.string());
  return default_stopwords();
}

FrameLexicon load_config_lexicon(const Json& config) {
  const fs::path p = data_path(config, "lexicon");
  try {
    return load_lexicon(p);
  } catch (const LexiconError& e) {
    throw PipelineError(ErrorCategory::input, e.what());
  } catch (const std::exception& e) {
    throw PipelineError(ErrorCategory::input, "cannot read lexicon " + p.string() + ": " + e.what());
  }
}

std::string key_of(const std::string& book, int index) { return book + ":" + std::to_string(index); }

// Forecast records carry the block they were computed from; the values are for the next block.
Json forecast_to_json(const std::string& book, int index, const Eigen::VectorXd& v) {
  return Json{{"book_id", book}, {"index", index}, {"forecast", std::vector<double>(v.data(), v.data() + v.size())}};
}

std::map<std::string, Eigen::VectorXd> load_forecasts(const RunContext& ctx) {
  std::map<std::string, Eigen::VectorXd> out;
  for (const auto& j : read_jsonl(require(ctx, "forecasts.jsonl", "train-forecaster"))) {
    const auto v = j.at("forecast").get<std::vector<double>>();
    out[key_of(j.at("book_id").get<std::string>(), j.at("index").get<int>())] =
        Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return out;
}

template <typename T>
std::map<std::string, T> index_by_key(const std::vector<T>& items) {
  std::map<std::string, T> out;
  for (const auto& item : items) out.emplace(key_of(item.book_id, item.index), item);
  return out;
}

struct PairSource {
  PlotSummary plot;
  PlotSummary next_plot;
  Eigen::VectorXd frame;
  Eigen::VectorXd next_frame;
  Eigen::VectorXd forecast;
};

// Consecutive (n, n+1) block pairs within one book for the given splits.
std::vector<PairSource> consecutive_pairs(const RunContext& ctx, const std::string& split, bool with_frames) {
  const auto plots = index_by_key(load_plots(ctx, split));
  std::map<std::string, FrameVector> frames;
  std::map<std::string, Eigen::VectorXd> forecasts;
  if (with_frames) {
    frames = index_by_key(load_frames(ctx, split));
    forecasts = load_forecasts(ctx);
  }
  std::vector<PairSource> out;
  for (const auto& [key, plot] : plots) {
    auto next = plots.find(key_of(plot.book_id, plot.index + 1));
    if (next == plots.end()) continue;
    PairSource p{plot, next->second, {}, {}, {}};
    if (with_frames) {
      p.frame = frames.at(key).values;
      p.next_frame = frames.at(next->first).values;
      auto f = forecasts.find(key);
      if (f == forecasts.end())
        throw PipelineError(ErrorCategory::missing_artifact, "no forecast for block " + key + "; rerun train-forecaster");
      p.forecast = f->second;
    }
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const PairSource& a, const PairSource& b) {
    return std::tie(a.plot.book_id, a.plot.index) < std::tie(b.plot.book_id, b.plot.index);
  });
  return out;
}

std::vector<int> storyline_ids(const Vocab& vocab, const std::vector<std::string>& storyline) {
  auto ids = vocab.encode(storyline);
  if (ids.empty()) ids.push_back(Vocab::kPad);
  return ids;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

nn::TrainSummary train_and_save(const RunContext& ctx, const std::string& name, nn::Seq2SeqModel<float>& model,
                                std::span<const nn::Example> train, std::span<const nn::Example> valid,
                                const nn::TrainConfig& tc, const Vocab& vocab, const std::string& tag) {
  if (train.empty())
    throw PipelineError(ErrorCategory::input, "no training pairs for " + name + "; the train split is too small");
  const fs::path log_path = ctx.artifact(name + "_log.jsonl");
  fs::remove(log_path);
  JsonlAppender log(log_path, false);
  auto on_event = [&](const nn::TrainEvent& e) {
    Json j{{"model", name}, {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}, {"wall_ms", e.wall_ms}};
    if (e.valid_perplexity) j["valid_perplexity"] = *e.valid_perplexity;
    if (e.train_accuracy) j["train_accuracy"] = *e.train_accuracy;
    log.append(j);
    ctx.emit("train-" + name, j);
  };
  nn::OptimizerState<float> state;
  nn::TrainSummary summary;
  try {
    summary = nn::train_model(model, train, valid, tc, on_event, &state);
  } catch (const nn::NonFiniteLoss& e) {
    throw PipelineError(ErrorCategory::training, std::string(e.what()));
  }
  Json meta{{"tag", tag},
            {"config_hash", config_hash(ctx.config)},
            {"steps", summary.steps},
            {"final_loss", summary.final_loss},
            {"train_examples", train.size()}};
  if (summary.valid_perplexity) meta["valid_perplexity"] = *summary.valid_perplexity;
  nn::save_checkpoint(ctx.artifact(name + ".ckpt"), model, vocab.hash(), &state, meta);
  return summary;
}

std::string drop_category(const std::string& reason) {
  const auto pos = reason.find(" has ");
  return pos == std::string::npos ? reason : reason.substr(0, pos);
}

std::vector<EvalInstance> load_instances(const RunContext& ctx) {
  return read_records<EvalInstance>(require(ctx, "instances.jsonl", "generate"), instance_from_json);
}

std::uint64_t instance_seed(std::uint64_t seed, const std::string& id, ModelTag tag) {
  return mix_seed(seed, fnv1a(id + "/" + to_string(tag)));
}

}  // namespace

IngestSummary run_ingest(const RunContext& ctx) {
  const fs::path books = data_path(ctx.config, "books");
  if (!fs::is_directory(books)) throw PipelineError(ErrorCategory::input, "books directory " + books.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(books))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.size() < 3)
    throw PipelineError(ErrorCategory::input, "need at least 3 .txt books in " + books.string() + ", found " +
                                                  std::to_string(files.size()));
  const int block_size = ctx.config.at("corpus").at("block_size").get<int>();
  if (block_size < 2) throw PipelineError(ErrorCategory::config, "corpus.block_size must be at least 2");
  const SegmenterOptions seg = segmenter_options(ctx.config);

  IngestSummary summary;
  std::map<std::string, std::vector<StoryBlock>> by_book;
  for (const auto& file : files) {
    const std::string raw = read_text(file);
    if (auto bad = find_invalid_utf8(raw))
      throw PipelineError(ErrorCategory::input,
                          file.string() + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
    const std::string id = file.stem().string();
    const auto sentences = segment_sentences(raw, seg);
    by_book[id] = build_blocks(sentences, id, block_size);
    summary.blocks_per_book[id] = static_cast<int>(by_book[id].size());
    ctx.emit("ingest", {{"book", id}, {"sentences", sentences.size()}, {"blocks", by_book[id].size()}});
  }
  std::vector<std::string> ids;
  for (const auto& [id, blocks] : by_book) ids.push_back(id);
  try {
    summary.split = split_corpus(ids, split_ratios(ctx.config), ctx.seed());
  } catch (const std::invalid_argument& e) {
    throw PipelineError(ErrorCategory::config, e.what());
  }

  fs::create_directories(ctx.run_dir);
  write_json_file(ctx.artifact("splits.json"),
                  Json{{"train", summary.split.train}, {"valid", summary.split.valid}, {"test", summary.split.test}});
  const std::vector<std::string>* parts[] = {&summary.split.train, &summary.split.valid, &summary.split.test};
  std::vector<StoryBlock> train_blocks;
  for (int s = 0; s < 3; ++s) {
    std::vector<StoryBlock> blocks;
    for (const auto& id : *parts[s]) blocks.insert(blocks.end(), by_book[id].begin(), by_book[id].end());
    write_records(ctx.artifact(std::string("blocks_") + kSplits[s] + ".jsonl"), blocks, block_to_json);
    if (s == 0) train_blocks = std::move(blocks);
  }
  const Vocab vocab = build_vocab(train_blocks, ctx.config.at("corpus").at("min_freq").get<int>());
  write_json_file(ctx.artifact("vocab.json"), vocab_to_json(vocab));
  summary.vocab_size = vocab.size();
  ctx.emit("ingest", {{"done", true}, {"vocab_size", vocab.size()}, {"run_dir", ctx.run_dir.string()}});
  return summary;
}

void run_extract_plots(const RunContext& ctx) {
  const StopwordList stopwords = load_stopwords(ctx.config);
  const auto train = load_blocks(ctx, "train");
  const WordIdf idf = WordIdf::fit(train, stopwords);
  write_json_file(ctx.artifact("word_idf.json"), idf.to_json());
  for (const char* split : kSplits) {
    const auto blocks = split == std::string("train") ? train : load_blocks(ctx, split);
    std::vector<PlotSummary> plots;
    plots.reserve(blocks.size());
    for (const auto& b : blocks) plots.push_back(extract_plot(b, idf, stopwords));
    write_records(ctx.artifact(std::string("plots_") + split + ".jsonl"), plots, plot_to_json);
    ctx.emit("extract-plots", {{"split", split}, {"plots", plots.size()}});
  }
}

void run_frames(const RunContext& ctx) {
  const FrameLexicon lexicon = load_config_lexicon(ctx.config);
  const auto train = load_blocks(ctx, "train");
  const IdfTable idf = compute_idf(train, lexicon);
  write_json_file(ctx.artifact("frame_idf.json"), idf_to_json(idf));
  for (const char* split : kSplits) {
    const auto blocks = split == std::string("train") ? train : load_blocks(ctx, split);
    std::vector<FrameVector> frames;
    frames.reserve(blocks.size());
    for (const auto& b : blocks) frames.push_back(frame_vector(b, idf, lexicon));
    write_records(ctx.artifact(std::string("frames_") + split + ".jsonl"), frames, frame_vector_to_json);
    ctx.emit("frames", {{"split", split}, {"frames", frames.size()}, {"dimension", lexicon.dimension()}});
  }
}

void run_train_forecaster(const RunContext& ctx) {
  const auto train = index_by_key(load_frames(ctx, "train"));
  std::vector<Eigen::VectorXd> inputs, targets;
  for (const auto& [key, fv] : train) {
    auto next = train.find(key_of(fv.book_id, fv.index + 1));
    if (next == train.end()) continue;
    inputs.push_back(fv.values);
    targets.push_back(next->second.values);
  }
  if (inputs.empty()) throw PipelineError(ErrorCategory::input, "no consecutive training block pairs for the forecaster");
  GbmForest forest;
  try {
    forest = fit_gbm(inputs, targets, gbm_config(ctx.config), ctx.seed());
  } catch (const std::invalid_argument& e) {
    throw PipelineError(ErrorCategory::config, e.what());
  } catch (const std::logic_error& e) {
    throw PipelineError(ErrorCategory::training, e.what());
  }
  forest.save(ctx.artifact("forecaster.json"));
  const auto& loss = forest.training_loss();
  ctx.emit("train-forecaster", {{"pairs", inputs.size()}, {"initial_mse", loss.front()}, {"final_mse", loss.back()}});

  std::vector<Json> records;
  for (const char* split : kSplits)
    for (const auto& fv : load_frames(ctx, split))
      records.push_back(forecast_to_json(fv.book_id, fv.index, forest.predict(fv.values)));
  write_jsonl(ctx.artifact("forecasts.jsonl"), records);
}

nn::TrainSummary run_train_fgpt(const RunContext& ctx) {
  const Vocab vocab = load_vocab(ctx);
  const Json& section = ctx.config.at("fgpt");
  const bool teacher = ctx.config.at("forecaster").value("teacher_frames", false);
  const auto train_pairs = consecutive_pairs(ctx, "train", true);
  const auto valid_pairs = consecutive_pairs(ctx, "valid", true);
  const int frame_dim = train_pairs.empty() ? 0 : static_cast<int>(train_pairs.front().frame.size());
  nn::ModelConfig mc;
  try {
    mc = model_config(section.at("model"), vocab.size(), frame_dim);
    mc.validate();
  } catch (const std::exception& e) {
    throw PipelineError(ErrorCategory::config, std::string("fgpt.model: ") + e.what());
  }
  auto make = [&](const std::vector<PairSource>& pairs) {
    std::vector<nn::Example> out;
    for (const auto& p : pairs)
      out.push_back({encode_source(vocab, p.plot.text, mc.max_src_len - 2), p.frame,
                     teacher ? p.next_frame : p.forecast, frame_target(vocab, p.next_plot.text, mc.max_tgt_len)});
    return out;
  };
  const auto train = make(train_pairs);
  const auto valid = make(valid_pairs);
  nn::Seq2SeqModel<float> model(mc, mix_seed(ctx.seed(), fnv1a("fgpt")));
  ctx.emit("train-fgpt", {{"train_examples", train.size()}, {"valid_examples", valid.size()},
                          {"parameters", model.params().size()}, {"teacher_frames", teacher}});
  return train_and_save(ctx, "fgpt", model, train, valid, train_config(section.at("train"), ctx.seed()), vocab, "FGPT2");
}

std::pair<nn::TrainSummary, nn::TrainSummary> run_train_pw(const RunContext& ctx) {
  const Vocab vocab = load_vocab(ctx);
  const Json& section = ctx.config.at("pw");
  const int phrases = section.value("storyline_phrases", 6);
  nn::ModelConfig mc;
  try {
    mc = model_config(section.at("model"), vocab.size(), 0);
    mc.validate();
  } catch (const std::exception& e) {
    throw PipelineError(ErrorCategory::config, std::string("pw.model: ") + e.what());
  }
  auto make = [&](const std::vector<PairSource>& pairs, bool stage_one) {
    std::vector<nn::Example> out;
    for (const auto& p : pairs) {
      const auto line = plan_storyline(p.next_plot.text, phrases);
      if (stage_one)
        out.push_back({encode_source(vocab, p.plot.text, mc.max_src_len), {}, {},
                       frame_target(vocab, join_words(line), mc.max_tgt_len)});
      else
        out.push_back({storyline_ids(vocab, line), {}, {}, frame_target(vocab, p.next_plot.text, mc.max_tgt_len)});
    }
    return out;
  };
  const auto train_pairs = consecutive_pairs(ctx, "train", false);
  const auto valid_pairs = consecutive_pairs(ctx, "valid", false);
  const auto tc = train_config(section.at("train"), ctx.seed());

  nn::Seq2SeqModel<float> storyline(mc, mix_seed(ctx.seed(), fnv1a("pw_storyline")));
  const auto s1 = train_and_save(ctx, "pw_storyline", storyline, make(train_pairs, true), make(valid_pairs, true), tc,
                                 vocab, "PW");
  nn::Seq2SeqModel<float> plot(mc, mix_seed(ctx.seed(), fnv1a("pw_plot")));
  const auto s2 =
      train_and_save(ctx, "pw_plot", plot, make(train_pairs, false), make(valid_pairs, false), tc, vocab, "PW");
  return {s1, s2};
}

std::shared_ptr<LlmTransport> make_transport(const Json& config) {
  const Json& l = config.at("llm");
  const std::string kind = l.value("transport", "mock");
  if (kind == "mock") return std::make_shared<MockTransport>(l.value("canned", std::string{}));
  if (kind == "http") {
    auto c = HttpTransportConfig::from_environment();
    c.timeout = std::chrono::milliseconds(l.value("timeout_ms", 10000));
    return std::make_shared<HttpTransport>(c);
  }
  throw PipelineError(ErrorCategory::config, "llm.transport must be \"mock\" or \"http\", got \"" + kind + "\"");
}

bool ModelBundle::has(ModelTag tag) const {
  switch (tag) {
    case ModelTag::GT:
    case ModelTag::RH:
    case ModelTag::RF: return !corpus.plots.empty();
    case ModelTag::FGPT2: return fgpt && vocab && lexicon && frame_idf && forecaster && word_idf;
    case ModelTag::PW: return pw_storyline && pw_plot && vocab;
    case ModelTag::LLM: return llm != nullptr;
  }
  return false;
}

ModelBundle load_bundle(const RunContext& ctx) {
  ModelBundle b;
  b.config = ctx.config;
  b.config_hash = config_hash(ctx.config);
  auto present = [&](const std::string& name) { return fs::exists(ctx.artifact(name)); };
  if (present("vocab.json")) b.vocab = load_vocab(ctx);
  if (fs::exists(data_path(ctx.config, "lexicon"))) b.lexicon = load_config_lexicon(ctx.config);
  if (present("frame_idf.json")) b.frame_idf = idf_from_json(read_json_file(ctx.artifact("frame_idf.json")));
  if (present("word_idf.json")) b.word_idf = WordIdf::from_json(read_json_file(ctx.artifact("word_idf.json")));
  if (present("forecaster.json")) b.forecaster = GbmForest::load(ctx.artifact("forecaster.json"));

  auto load_model = [&](const std::string& file, const std::string& tag, std::optional<nn::Seq2SeqModel<float>>& slot) {
    if (!present(file) || !b.vocab) return;
    auto ckpt = nn::load_checkpoint(ctx.artifact(file));
    if (ckpt.vocab_hash != b.vocab->hash())
      throw PipelineError(ErrorCategory::input, file + " was trained with a different vocabulary");
    slot = std::move(ckpt.model);
    const std::string bytes = read_text(ctx.artifact(file));
    const std::string h = hex64(fnv1a(bytes));
    b.model_hashes[tag] = b.model_hashes.count(tag) ? hex64(fnv1a(b.model_hashes[tag] + h)) : h;
  };
  load_model("fgpt.ckpt", "FGPT2", b.fgpt);
  load_model("pw_storyline.ckpt", "PW", b.pw_storyline);
  load_model("pw_plot.ckpt", "PW", b.pw_plot);
  b.llm = make_transport(ctx.config);

  for (const char* split : kSplits) {
    if (present(std::string("blocks_") + split + ".jsonl"))
      for (auto& blk : load_blocks(ctx, split)) b.corpus.blocks[blk.book_id].push_back(std::move(blk));
    if (present(std::string("plots_") + split + ".jsonl"))
      for (auto& p : load_plots(ctx, split)) b.corpus.plots[p.book_id].push_back(std::move(p));
    if (present(std::string("frames_") + split + ".jsonl"))
      for (auto& f : load_frames(ctx, split)) {
        auto& v = b.corpus.frames[f.book_id];
        if (static_cast<int>(v.size()) <= f.index) v.resize(static_cast<std::size_t>(f.index) + 1);
        v[static_cast<std::size_t>(f.index)] = std::move(f.values);
      }
  }
  if (present("forecasts.jsonl"))
    for (const auto& [key, value] : load_forecasts(ctx)) {
      const auto colon = key.rfind(':');
      const auto index = static_cast<std::size_t>(std::stoi(key.substr(colon + 1)));
      auto& v = b.corpus.forecasts[key.substr(0, colon)];
      if (v.size() <= index) v.resize(index + 1);
      v[index] = value;
    }
  for (auto& [book, blocks] : b.corpus.blocks)
    std::sort(blocks.begin(), blocks.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
  for (auto& [book, plots] : b.corpus.plots)
    std::sort(plots.begin(), plots.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
  return b;
}

FgptInput fgpt_input(const ModelBundle& bundle, const StoryBlock& block) {
  if (!bundle.has(ModelTag::FGPT2)) throw PipelineError(ErrorCategory::missing_artifact, "FGPT2 is not loaded");
  const auto plot = extract_plot(block, *bundle.word_idf);
  FgptInput in;
  in.source = encode_source(*bundle.vocab, plot.text, bundle.fgpt->config().max_src_len - 2);
  in.frame = frame_vector(block, *bundle.frame_idf, *bundle.lexicon).values;
  in.forecast = bundle.forecaster->predict(in.frame);
  return in;
}

GenerateSummary run_generate(const RunContext& ctx, const std::vector<ModelTag>& models) {
  const ModelBundle bundle = load_bundle(ctx);
  for (ModelTag tag : models)
    if (!bundle.has(tag)) {
      const std::string stage = tag == ModelTag::FGPT2 ? "train-fgpt" : tag == ModelTag::PW ? "train-pw" : "extract-plots";
      throw PipelineError(ErrorCategory::missing_artifact, to_string(tag) + " is not available; run `plotcast " + stage + "` first");
    }
  const CorpusSplit split = load_split(ctx);
  const InstanceFilter filter = instance_filter(ctx.config);
  const RandomBaselineConfig baselines = baseline_config(ctx.config);
  SamplerConfig sampler = sampler_config(ctx.config.at("sampler"));
  SamplerConfig storyline = sampler_config(ctx.config.at("storyline_sampler"));
  const LlmParams llm = llm_params(ctx.config);
  RetryPolicy retry;
  retry.max_retries = ctx.config.at("llm").value("max_retries", retry.max_retries);
  const int cap = ctx.config.at("evaluation").value("max_instances", 0);

  GenerateSummary summary;
  std::vector<EvalInstance> kept;
  for (const auto& book : split.test) {
    auto bit = bundle.corpus.blocks.find(book);
    auto pit = bundle.corpus.plots.find(book);
    if (bit == bundle.corpus.blocks.end() || pit == bundle.corpus.plots.end()) continue;
    const auto& blocks = bit->second;
    const auto& plots = pit->second;
    for (std::size_t i = 0; i + 1 < blocks.size(); ++i) {
      if (cap > 0 && static_cast<int>(kept.size()) >= cap) break;
      if (blocks[i + 1].index != blocks[i].index + 1) continue;
      ++summary.candidates;
      EvalInstance in;
      in.id = key_of(book, blocks[i].index);
      in.context = blocks[i];
      in.next = blocks[i + 1];
      in.context_plot = plots[i];
      in.reference = plots[i + 1];
      if (auto reason = filter_reason(in, filter)) {
        ++summary.dropped[drop_category(*reason)];
        continue;
      }
      try {
        for (ModelTag tag : models) {
          const std::uint64_t seed = instance_seed(ctx.seed(), in.id, tag);
          switch (tag) {
            case ModelTag::GT: in.suggestions[tag] = ground_truth(in.reference); break;
            case ModelTag::RH:
              in.suggestions[tag] = random_offset_plot(plots, in.context.index, OffsetKind::history, baselines, seed);
              break;
            case ModelTag::RF:
              in.suggestions[tag] = random_offset_plot(plots, in.context.index, OffsetKind::future, baselines, seed);
              break;
            case ModelTag::FGPT2: {
              FgptInput fi;
              fi.source = encode_source(*bundle.vocab, in.context_plot.text, bundle.fgpt->config().max_src_len - 2);
              fi.frame = bundle.corpus.frames.at(book).at(static_cast<std::size_t>(in.context.index));
              fi.forecast = bundle.corpus.forecasts.at(book).at(static_cast<std::size_t>(in.context.index));
              sampler.seed = seed;
              in.suggestions[tag] = fgpt_generate(*bundle.fgpt, *bundle.vocab, fi, sampler);
              break;
            }
            case ModelTag::PW: {
              sampler.seed = seed;
              storyline.seed = mix_seed(seed, 1);
              const auto src = encode_source(*bundle.vocab, in.context_plot.text, bundle.pw_storyline->config().max_src_len);
              in.suggestions[tag] =
                  pw_generate({*bundle.pw_storyline, *bundle.pw_plot, *bundle.vocab}, src, storyline, sampler);
              break;
            }
            case ModelTag::LLM: in.suggestions[tag] = llm_generate(in.context.text(), *bundle.llm, llm, retry); break;
          }
        }
      } catch (const NoValidOffset&) {
        ++summary.dropped["no valid random offset"];
        continue;
      } catch (const LlmError& e) {
        throw PipelineError(ErrorCategory::external, e.what());
      }
      if (auto reason = filter_reason(in, filter)) {
        ++summary.dropped[drop_category(*reason)];
        continue;
      }
      kept.push_back(std::move(in));
      if (kept.size() % 10 == 0) ctx.emit("generate", {{"kept", kept.size()}, {"candidates", summary.candidates}});
    }
  }
  summary.kept = static_cast<int>(kept.size());
  write_records(ctx.artifact("instances.jsonl"), kept, instance_to_json);
  ctx.emit("generate", {{"done", true}, {"kept", summary.kept}, {"candidates", summary.candidates},
                        {"dropped", summary.dropped}});
  return summary;
}

namespace {

std::unique_ptr<TextEncoder> config_encoder(const RunContext& ctx, std::shared_ptr<const TokenEmbeddings>* out_emb) {
  const std::string name = ctx.config.at("evaluation").value("encoder", "tfidf_bag");
  const WordIdf idf = WordIdf::from_json(read_json_file(require(ctx, "word_idf.json", "extract-plots")));
  std::shared_ptr<const TokenEmbeddings> emb;
  if (fs::exists(ctx.artifact("fgpt.ckpt")) && fs::exists(ctx.artifact("vocab.json"))) {
    const auto ckpt = nn::load_checkpoint(ctx.artifact("fgpt.ckpt"));
    const auto& slot = ckpt.model.layout().tok_emb;
    emb = std::make_shared<TokenEmbeddings>(load_vocab(ctx), ckpt.model.view(slot).cast<double>());
  }
  if (out_emb) *out_emb = emb;
  try {
    return make_encoder(name, idf, emb);
  } catch (const ConfigError& e) {
    throw PipelineError(ErrorCategory::config, e.what());
  }
}

}  // namespace

EvaluateResult run_evaluate(const RunContext& ctx, const std::vector<ModelTag>& models) {
  const auto instances = load_instances(ctx);
  if (instances.empty())
    throw PipelineError(ErrorCategory::input, "instances.jsonl holds no instances; every candidate was filtered out");
  for (ModelTag tag : models)
    if (std::none_of(instances.begin(), instances.end(), [&](const auto& in) { return in.suggestions.count(tag); }))
      throw PipelineError(ErrorCategory::missing_artifact,
                          to_string(tag) + " has no generated suggestions; rerun `plotcast generate` with it");
  const auto encoder = config_encoder(ctx, nullptr);
  EvaluateResult r;
  r.report = compute_metric_report(instances, models, *encoder);
  r.report.config_hash = config_hash(ctx.config);
  TableLayout layout;
  layout.published_layout = ctx.config.at("evaluation").value("published_layout", false);
  r.table = render_metric_table(r.report, models, layout);
  write_json_file(ctx.artifact("metrics.json"), metric_report_to_json(r.report));
  write_text_atomic(ctx.artifact("table1.txt"), r.table);
  ctx.emit("evaluate", {{"instances", r.report.instances}, {"encoder", r.report.encoder}});
  return r;
}

std::vector<StudyRecord> build_proxy_study(const RunContext& ctx) {
  const auto instances = load_instances(ctx);
  std::map<std::string, std::vector<StoryBlock>> by_book;
  for (const char* split : kSplits)
    for (auto& blk : load_blocks(ctx, split)) by_book[blk.book_id].push_back(std::move(blk));
  std::map<std::string, std::vector<std::string>> pools;  // paragraphs from every book except the key
  for (const auto& [book, blocks] : by_book) {
    std::vector<StoryBlock> others;
    for (const auto& [other, ob] : by_book)
      if (other != book) others.insert(others.end(), ob.begin(), ob.end());
    pools[book] = random_paragraph_pool(others);
  }
  std::vector<StudyRecord> out;
  for (const auto& in : instances) {
    StudyRecord r;
    r.instance_id = in.id;
    r.story = in.next.text();
    r.plots["GT"] = in.reference.text;
    for (ModelTag tag : {ModelTag::RF, ModelTag::FGPT2, ModelTag::LLM})
      if (auto it = in.suggestions.find(tag); it != in.suggestions.end()) r.plots[to_string(tag)] = it->second.text;
    const auto& pool = pools[in.context.book_id];
    if (!pool.empty()) {
      Rng rng(mix_seed(ctx.seed(), fnv1a(in.id + "/Random")));
      r.plots["Random"] = pool[static_cast<std::size_t>(rng.below(pool.size()))];
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string run_stats(const RunContext& ctx, const StatsOptions& options) {
  std::string text;
  Json summary = Json::object();
  TableLayout layout;
  layout.published_layout = ctx.config.at("evaluation").value("published_layout", false);
  const std::string kind_name = ctx.config.at("evaluation").value("ttest", "welch");
  if (kind_name != "welch" && kind_name != "paired")
    throw PipelineError(ErrorCategory::config, "evaluation.ttest must be \"welch\" or \"paired\"");
  const TTestKind kind = kind_name == "paired" ? TTestKind::paired : TTestKind::welch;

  const fs::path rankings = options.rankings.value_or(ctx.artifact("rankings.jsonl"));
  const bool want_rankings = options.rankings || (!options.study && !options.proxy_study && !options.questionnaires);
  if (want_rankings) {
    if (!fs::exists(rankings))
      throw PipelineError(ErrorCategory::missing_artifact,
                          rankings.string() + " not found; collect rankings through POST /v1/rankings or pass --rankings");
    std::vector<RankingRecord> records;
    long line = 0;
    for (const auto& j : read_jsonl(rankings)) {
      ++line;
      try {
        records.push_back(ranking_from_json(j));
      } catch (const Json::exception& e) {
        throw PipelineError(ErrorCategory::input, rankings.string() + " record " + std::to_string(line) + ": " + e.what());
      }
    }
    Json tables = Json::object();
    int number = 2;
    for (const char* aspect : {"consistency", "storiability"}) {
      const auto table = build_rank_table(records, aspect, kind, layout);
      const std::string rendered = render_rank_table(table);
      write_text_atomic(ctx.artifact("table" + std::to_string(number++) + ".txt"), rendered);
      tables[aspect] = rank_table_to_json(table);
      text += rendered + "\n";
    }
    std::vector<std::string> rejected;
    mean_ranks(records, &rejected);
    summary["rankings"] = {{"records", records.size()}, {"rejected", rejected.size()}};
    write_json_file(ctx.artifact("rank_tables.json"), tables);
  }

  if (options.study || options.proxy_study) {
    std::vector<StudyRecord> study;
    if (options.study) {
      if (!fs::exists(*options.study))
        throw PipelineError(ErrorCategory::input, options.study->string() + " not found");
      for (const auto& j : read_jsonl(*options.study)) study.push_back(study_from_json(j));
    } else {
      study = build_proxy_study(ctx);
      write_records(ctx.artifact("study_proxy.jsonl"), study, study_to_json);
    }
    if (study.empty()) throw PipelineError(ErrorCategory::input, "the study holds no records");
    std::shared_ptr<const TokenEmbeddings> emb;
    const auto encoder = config_encoder(ctx, &emb);
    const StopwordList stopwords = load_stopwords(ctx.config);
    CoverageOptions cov;
    cov.embeddings = emb.get();
    cov.stopwords = &stopwords;
    const auto analysis = analyze_study(study, *encoder, cov);
    const std::string t4 = render_similarity_table(analysis);
    const std::string t5 = render_coverage_table(analysis);
    write_text_atomic(ctx.artifact("table4.txt"), t4);
    write_text_atomic(ctx.artifact("table5.txt"), t5);
    write_json_file(ctx.artifact("study.json"), study_analysis_to_json(analysis));
    text += t4 + "\n" + t5 + "\n";
    summary["study"] = {{"records", study.size()}, {"proxy", !options.study}};
  }

  if (options.questionnaires) {
    if (!fs::exists(*options.questionnaires))
      throw PipelineError(ErrorCategory::input, options.questionnaires->string() + " not found");
    std::vector<QuestionnaireResponse> responses;
    for (const auto& j : read_jsonl(*options.questionnaires)) responses.push_back(questionnaire_from_json(j));
    std::vector<std::string> models;
    for (ModelTag tag : kAllModelTags) models.push_back(to_string(tag));
    std::vector<std::string> rejected;
    const auto scores = questionnaire_scores(responses, models, &rejected);
    const std::string rendered = render_questionnaire_table(scores);
    write_text_atomic(ctx.artifact("questionnaire.txt"), rendered);
    write_json_file(ctx.artifact("questionnaire.json"), questionnaire_scores_to_json(scores));
    text += rendered;
    summary["questionnaires"] = {{"responses", responses.size()}, {"rejected", rejected.size()}};
  }
  ctx.emit("stats", summary);
  return text;
}

}  // namespace plotcast
