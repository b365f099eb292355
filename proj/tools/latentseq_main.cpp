// Command-line driver for the latentseq pipeline:
//   synth -> cipher -> pretrain-lm -> train -> transfer -> eval / elbo
//
// Exit status: 0 success, 1 usage error, 2 runtime failure.

#include <sys/stat.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "latentseq/checkpoint.h"
#include "latentseq/config.h"
#include "latentseq/corpus.h"
#include "latentseq/latent.h"
#include "latentseq/lm.h"
#include "latentseq/metrics.h"
#include "latentseq/model.h"
#include "latentseq/training.h"

namespace fs = std::filesystem;
using namespace latentseq;

namespace {

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << content;
    if (!f) throw std::runtime_error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

void require_file(const std::string& path, const std::string& role) {
  if (!fs::exists(path))
    throw std::runtime_error("missing " + role + ": " + path);
}

std::string corpus_text(const data::Corpus& c, const Vocab& v) {
  std::ostringstream os;
  for (const Sequence& s : c.sentences) os << v.decode(s.content()) << '\n';
  return os.str();
}

// ---- train config plumbing ----

struct ConfigFlags {
  std::string config_path;
  io::ConfigMap overrides;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  auto opt = [cmd, &f](const char* flag, const char* key, const char* help) {
    cmd->add_option_function<std::string>(
        flag,
        [&f, key](const std::string& v) { f.overrides.set(key, v); }, help);
  };
  opt("--seed", "seed", "rng seed");
  opt("--lambda", "lambda", "KL weight");
  opt("--pool-window", "pool_window", "attention pooling window");
  opt("--anneal-epochs", "anneal_epochs", "self-reconstruction decay epochs k");
  opt("--estimator", "estimator", "stop-gradient|gumbel|reinforce");
  opt("--objective", "objective", "elbo|bt-nll|unmt");
  opt("--embed-dim", "embed_dim", "embedding size");
  opt("--hidden-dim", "hidden_dim", "LSTM hidden size");
  opt("--epochs", "epochs", "training epochs");
  opt("--batch-size", "batch_size", "batch size");
  opt("--gumbel-temp", "gumbel_temperature", "Gumbel-softmax temperature");
  opt("--noise-drop", "noise_drop", "word drop probability");
  opt("--noise-shuffle", "noise_shuffle", "local shuffle bound");
  opt("--lr", "lr", "learning rate");
  opt("--recon-mode", "recon_mode", "greedy|sample reconstruction latents");
  opt("--share-params", "share_params", "parameter tying (1|0)");
}

train::TrainConfig resolve_config(const ConfigFlags& f) {
  io::ConfigMap file;
  if (!f.config_path.empty()) {
    require_file(f.config_path, "config file");
    file = io::parse_config_file(f.config_path);
  }
  return io::make_train_config(file, f.overrides);
}

// ---- checkpoint plumbing ----

io::Checkpoint model_checkpoint(const nn::Model& model,
                                const train::TrainConfig& cfg,
                                const train::TrainState& st) {
  io::Checkpoint ckpt;
  ckpt.kind = "model";
  ckpt.set_meta("vocab", std::to_string(model.config().vocab));
  ckpt.set_meta("epoch", std::to_string(st.epoch));
  ckpt.set_meta("step", std::to_string(st.step));
  ckpt.set_meta("adam_t", std::to_string(st.adam.t));
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", st.best_val_elbo);
  ckpt.set_meta("best_val_elbo", buf);
  ckpt.set_meta("best_epoch", std::to_string(st.best_epoch));
  std::snprintf(buf, sizeof(buf), "%.17g", st.baseline.value);
  ckpt.set_meta("baseline_value", buf);
  ckpt.set_meta("baseline_init", st.baseline.initialized ? "1" : "0");
  ckpt.config = io::config_snapshot(cfg);
  ckpt.rng_state = st.rng.save_state();
  io::pack_store(ckpt, model.store(), /*with_opt_state=*/true);
  return ckpt;
}

struct LoadedModel {
  nn::Model model;
  train::TrainConfig cfg;
};

LoadedModel model_from_checkpoint(const io::Checkpoint& ckpt) {
  if (ckpt.kind != "model")
    throw std::runtime_error("checkpoint is not a model checkpoint");
  train::TrainConfig cfg = io::make_train_config(ckpt.config, {});
  nn::ModelConfig mc;
  mc.vocab = static_cast<int>(ckpt.meta_long("vocab", 0));
  mc.embed = cfg.embed_dim;
  mc.hidden = cfg.hidden_dim;
  mc.pool_window = cfg.pool_window;
  mc.dropout = cfg.dropout;
  mc.tied = cfg.share_params;
  Rng dummy(0);
  LoadedModel lm_{nn::Model(mc, dummy), cfg};
  io::unpack_store(ckpt, lm_.model.store(), /*with_opt_state=*/true);
  return lm_;
}

io::Checkpoint lm_checkpoint(const lm::LanguageModel& model, uint64_t seed) {
  io::Checkpoint ckpt;
  ckpt.kind = "lm";
  ckpt.set_meta("vocab", std::to_string(model.config().vocab));
  ckpt.set_meta("embed", std::to_string(model.config().embed));
  ckpt.set_meta("hidden", std::to_string(model.config().hidden));
  ckpt.set_meta("seed", std::to_string(seed));
  io::pack_store(ckpt, model.store(), /*with_opt_state=*/false);
  return ckpt;
}

lm::LanguageModel lm_from_checkpoint(const io::Checkpoint& ckpt) {
  if (ckpt.kind != "lm")
    throw std::runtime_error("checkpoint is not an lm checkpoint");
  lm::LmConfig cfg;
  cfg.vocab = static_cast<int>(ckpt.meta_long("vocab", 0));
  cfg.embed = static_cast<int>(ckpt.meta_long("embed", 32));
  cfg.hidden = static_cast<int>(ckpt.meta_long("hidden", 64));
  Rng dummy(0);
  lm::LanguageModel model(cfg, dummy);
  io::unpack_store(ckpt, model.store(), /*with_opt_state=*/false);
  model.freeze();
  return model;
}

// ---- data directory conventions (see README) ----

struct DataDir {
  std::string dir;
  std::string vocab_full() const { return dir + "/vocab_full.txt"; }
  std::string vocab_plain() const { return dir + "/vocab.txt"; }
  std::string corpus(const std::string& domain, const std::string& split) const {
    return dir + "/" + domain + "." + split + ".txt";
  }
  std::string key() const { return dir + "/key.txt"; }
  std::string bigram() const { return dir + "/bigram.tsv"; }
};

int run_synth(const std::string& out_dir, uint64_t seed, int vocab_size,
              int sentences, int val, int test, int len_min, int len_max) {
  fs::create_directories(out_dir);
  DataDir d{out_dir};
  Vocab vocab = Vocab::with_reserved();
  for (int i = 0; i < vocab_size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%02d", i);
    vocab.add(buf);
  }

  auto result = data::synth_bigram_corpus(seed, vocab_size,
                                          2 * (sentences + val + test),
                                          len_min, len_max, 0);
  const auto& all = result.corpus.sentences;
  auto slice = [&](size_t b, size_t n, int domain) {
    data::Corpus c;
    c.domain = domain;
    c.sentences.assign(all.begin() + static_cast<long>(b),
                       all.begin() + static_cast<long>(b + n));
    for (auto& s : c.sentences) s.domain = domain;
    return c;
  };
  size_t n = static_cast<size_t>(sentences), nv = static_cast<size_t>(val),
         nt = static_cast<size_t>(test);
  // two disjoint streams: d1 observes plain text, d2src is the plain text
  // that the cipher step will encipher (non-parallel with d1)
  data::Corpus d1_train = slice(0, n, 0);
  data::Corpus d1_val = slice(n, nv, 0);
  data::Corpus d1_test = slice(n + nv, nt, 0);
  data::Corpus d2_train = slice(n + nv + nt, n, 0);
  data::Corpus d2_val = slice(2 * n + nv + nt, nv, 0);
  data::Corpus d2_test = slice(2 * n + 2 * nv + nt, nt, 0);

  vocab.save(d.vocab_plain());
  write_text_atomic(d.corpus("d1", "train"), corpus_text(d1_train, vocab));
  write_text_atomic(d.corpus("d1", "val"), corpus_text(d1_val, vocab));
  write_text_atomic(d.corpus("d1", "test"), corpus_text(d1_test, vocab));
  write_text_atomic(d.corpus("d2src", "train"), corpus_text(d2_train, vocab));
  write_text_atomic(d.corpus("d2src", "val"), corpus_text(d2_val, vocab));
  write_text_atomic(d.corpus("d2src", "test"), corpus_text(d2_test, vocab));

  std::ostringstream bg;
  bg << "initial";
  for (double p : result.generator.initial) bg << '\t' << p;
  bg << '\n';
  for (int i = 0; i < vocab_size; ++i) {
    bg << "row" << i;
    for (int j = 0; j < vocab_size; ++j)
      bg << '\t' << result.generator.transition[static_cast<size_t>(i) * vocab_size + j];
    bg << '\n';
  }
  write_text_atomic(d.bigram(), bg.str());
  std::cout << "synth: wrote " << out_dir << " (vocab " << vocab_size
            << ", train " << sentences << ", val " << val << ", test " << test
            << ")\n";
  return 0;
}

int run_cipher(const std::string& dir, uint64_t seed) {
  DataDir d{dir};
  require_file(d.vocab_plain(), "plain vocabulary (run synth first)");
  Vocab vocab = Vocab::load(d.vocab_plain());
  int plain_begin = Vocab::kReserved;
  int n = vocab.size() - Vocab::kReserved;
  int cipher_begin = vocab.size();
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "c%02d", i);
    vocab.add(buf);
  }
  Rng rng(Rng::mix(seed, 0xc1f));
  data::CipherKey key =
      data::make_cipher_key(rng, vocab.size(), plain_begin, cipher_begin, n);

  for (const char* split : {"train", "val", "test"}) {
    std::string src = d.corpus("d2src", split);
    require_file(src, "plain d2 corpus (run synth first)");
    data::Corpus plain = data::load_corpus(src, vocab, 1);
    data::Corpus ciphered = data::apply_cipher(plain, key, 1);
    write_text_atomic(d.corpus("d2", split), corpus_text(ciphered, vocab));
  }
  vocab.save(d.vocab_full());
  key.save(d.key(), vocab);
  std::cout << "cipher: enciphered d2 corpora with a " << n
            << "-type substitution key\n";
  return 0;
}

int run_pretrain_lm(const std::string& dir, const std::string& domain,
                    const std::string& out, const ConfigFlags& flags) {
  train::TrainConfig cfg = resolve_config(flags);
  DataDir d{dir};
  require_file(d.vocab_full(), "combined vocabulary (run cipher first)");
  Vocab vocab = Vocab::load(d.vocab_full());
  std::string train_path = d.corpus(domain, "train");
  require_file(train_path, "training corpus for " + domain);
  data::Corpus corpus = data::load_corpus(train_path, vocab, domain == "d1" ? 0 : 1);

  lm::LmConfig lc{vocab.size(), cfg.embed_dim, cfg.hidden_dim};
  lm::LmTrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.clip_norm = cfg.clip_norm;
  tc.seed = cfg.seed;
  lm::LmTrainResult result = lm::pretrain_lm(corpus, lc, tc);

  save_checkpoint(out, lm_checkpoint(result.model, cfg.seed));
  std::ostringstream trace;
  trace << "epoch\tnll_per_token\n";
  for (size_t e = 0; e < result.nll_per_token_trace.size(); ++e)
    trace << e << '\t' << result.nll_per_token_trace[e] << '\n';
  write_text_atomic(out + ".trace.tsv", trace.str());
  std::cout << "pretrain-lm: " << domain << " -> " << out << " (final nll/token "
            << result.nll_per_token_trace.back() << ")\n";
  return 0;
}

int run_train(const std::string& dir, const std::string& lm1_path,
              const std::string& lm2_path, const std::string& out_dir,
              const std::string& resume, const ConfigFlags& flags) {
  train::TrainConfig cfg = resolve_config(flags);
  DataDir d{dir};
  require_file(d.vocab_full(), "combined vocabulary");
  require_file(lm1_path, "pretrained D1 language-model checkpoint");
  require_file(lm2_path, "pretrained D2 language-model checkpoint");
  Vocab vocab = Vocab::load(d.vocab_full());

  auto load = [&](const std::string& domain, const std::string& split) {
    std::string p = d.corpus(domain, split);
    require_file(p, domain + " " + split + " corpus");
    return data::load_corpus(p, vocab, domain == "d1" ? 0 : 1);
  };
  data::Corpus train_x = load("d1", "train"), train_y = load("d2", "train");
  data::Corpus val_x = load("d1", "val"), val_y = load("d2", "val");

  lm::LanguageModel prior1 = lm_from_checkpoint(io::load_checkpoint(lm1_path));
  lm::LanguageModel prior2 = lm_from_checkpoint(io::load_checkpoint(lm2_path));

  nn::ModelConfig mc{vocab.size(), cfg.embed_dim, cfg.hidden_dim,
                     cfg.pool_window, cfg.dropout, cfg.share_params};
  Rng init_rng(Rng::mix(cfg.seed, 0x0d31));
  nn::Model model(mc, init_rng);

  train::TrainState st;
  if (!resume.empty()) {
    io::Checkpoint ckpt = io::load_checkpoint(resume);
    LoadedModel loaded = model_from_checkpoint(ckpt);
    model = std::move(loaded.model);
    st.epoch = static_cast<int>(ckpt.meta_long("epoch", 0));
    st.step = ckpt.meta_long("step", 0);
    st.adam.t = ckpt.meta_long("adam_t", 0);
    st.adam.lr = cfg.lr;
    st.adam.beta1 = cfg.beta1;
    st.adam.beta2 = cfg.beta2;
    st.adam.clip_norm = cfg.clip_norm;
    st.best_val_elbo = ckpt.meta_double("best_val_elbo",
                                        -std::numeric_limits<double>::infinity());
    st.best_epoch = static_cast<int>(ckpt.meta_long("best_epoch", -1));
    st.baseline.value = ckpt.meta_double("baseline_value", 0.0);
    st.baseline.initialized = ckpt.meta_long("baseline_init", 0) != 0;
    st.rng.load_state(ckpt.rng_state);
    st.best_params = model.store();
  }

  fs::create_directories(out_dir);
  auto save_state = [&](const std::string& name, const nn::Model& m,
                        const train::TrainState& s) {
    save_checkpoint(out_dir + "/" + name, model_checkpoint(m, cfg, s));
  };

  train::TrainResult result = train::train(
      model, prior1, prior2, train_x, train_y, val_x, val_y, cfg, &st,
      [&](const train::EpochInfo& info) {
        save_state("epoch_" + std::to_string(info.epoch) + ".ckpt", model,
                   info.state);
        save_state("last.ckpt", model, info.state);
        if (info.improved) {
          Rng shape_rng(0);
          nn::Model best(model.config(), shape_rng);
          best.store() = info.state.best_params;
          save_state("best.ckpt", best, info.state);
        }
        std::cout << "epoch " << info.epoch << ": val elbo/word "
                  << info.val_elbo_per_word << (info.improved ? " *" : "")
                  << std::endl;
      });

  std::ostringstream trace;
  trace << train::kTraceHeader << '\n';
  for (const std::string& row : result.trace_rows) trace << row << '\n';
  // appending to an existing trace keeps resumed runs comparable
  std::string trace_path = out_dir + "/trace.tsv";
  if (!resume.empty() && fs::exists(trace_path)) {
    std::ifstream prev(trace_path);
    std::stringstream buf;
    buf << prev.rdbuf();
    std::string existing = buf.str();
    write_text_atomic(trace_path, existing + trace.str().substr(
                                                 trace.str().find('\n') + 1));
  } else {
    write_text_atomic(trace_path, trace.str());
  }
  std::cout << "train: best val elbo/word " << result.best_val_elbo
            << " at epoch " << result.best_epoch << "\n";
  return 0;
}

int run_transfer(const std::string& ckpt_path, const std::string& input,
                 const std::string& vocab_path, const std::string& direction,
                 const std::string& out) {
  require_file(ckpt_path, "model checkpoint");
  require_file(input, "input corpus");
  require_file(vocab_path, "vocabulary");
  LoadedModel loaded = model_from_checkpoint(io::load_checkpoint(ckpt_path));
  Vocab vocab = Vocab::load(vocab_path);
  nn::Dir dir;
  if (direction == "d1-d2") dir = nn::Dir::D1toD2;
  else if (direction == "d2-d1") dir = nn::Dir::D2toD1;
  else throw std::runtime_error("direction must be d1-d2 or d2-d1");

  data::Corpus src = data::load_corpus(input, vocab,
                                       dir == nn::Dir::D1toD2 ? 0 : 1);
  std::ostringstream os;
  for (const Sequence& s : src.sentences) {
    Sequence t = latent::transfer(loaded.model, s, dir,
                                  nn::default_max_len(s.length()));
    os << vocab.decode(t.content()) << '\n';
  }
  write_text_atomic(out, os.str());
  std::cout << "transfer: " << src.size() << " sentences -> " << out << "\n";
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& dir,
             const std::string& lm1_path, const std::string& lm2_path,
             const std::string& out, bool with_refs, bool with_key) {
  DataDir d{dir};
  require_file(ckpt_path, "model checkpoint");
  require_file(d.vocab_full(), "combined vocabulary");
  require_file(lm1_path, "external D1 language-model checkpoint");
  require_file(lm2_path, "external D2 language-model checkpoint");
  LoadedModel loaded = model_from_checkpoint(io::load_checkpoint(ckpt_path));
  Vocab vocab = Vocab::load(d.vocab_full());
  lm::LanguageModel lm1 = lm_from_checkpoint(io::load_checkpoint(lm1_path));
  lm::LanguageModel lm2 = lm_from_checkpoint(io::load_checkpoint(lm2_path));

  auto load = [&](const std::string& domain, const std::string& split) {
    std::string p = d.corpus(domain, split);
    require_file(p, domain + " " + split + " corpus");
    return data::load_corpus(p, vocab, domain == "d1" ? 0 : 1);
  };
  data::Corpus test_d1 = load("d1", "test"), test_d2 = load("d2", "test");
  data::Corpus train_d1 = load("d1", "train"), train_d2 = load("d2", "train");

  metrics::EvalInputs in;
  in.test_d1 = &test_d1;
  in.test_d2 = &test_d2;
  in.nb_train_d1 = &train_d1;
  in.nb_train_d2 = &train_d2;
  in.eval_lm_d1 = &lm1;
  in.eval_lm_d2 = &lm2;
  in.lambda = loaded.cfg.lambda;

  data::Corpus refs_d2_to_d1;
  data::Corpus refs_d1_to_d2;
  if (with_refs) {
    // decipherment references: d2 test sentences are enciphered d2src ones
    refs_d2_to_d1 = load("d2src", "test");
    if (fs::exists(d.corpus("d1ref", "test")))
      refs_d1_to_d2 = load("d1ref", "test");
    else if (with_key) {
      data::CipherKey key = data::CipherKey::load(d.key(), vocab);
      refs_d1_to_d2 = data::apply_cipher(test_d1, key, 1);
    }
    if (!refs_d1_to_d2.empty() && !refs_d2_to_d1.empty()) {
      in.refs_d1_to_d2 = &refs_d1_to_d2;
      in.refs_d2_to_d1 = &refs_d2_to_d1;
    }
  }

  Rng rng(Rng::mix(loaded.cfg.seed, 0xe7a1));
  metrics::EvalReport rep =
      metrics::full_eval(loaded.model, lm1, lm2, in, rng);

  std::ostringstream extra;
  if (with_key) {
    data::CipherKey key = data::CipherKey::load(d.key(), vocab);
    std::vector<Sequence> outputs;
    for (const Sequence& s : test_d2.sentences)
      outputs.push_back(latent::transfer(loaded.model, s, nn::Dir::D2toD1,
                                         nn::default_max_len(s.length())));
    int n_types = (vocab.size() - Vocab::kReserved) / 2;
    int cipher_begin = Vocab::kReserved + n_types;
    double tma = metrics::token_mapping_accuracy(test_d2.sentences, outputs,
                                                 key, cipher_begin, n_types);
    extra << "token_mapping_accuracy=" << tma << '\n';
    if (!refs_d2_to_d1.empty())
      extra << "bleu1_d2_to_d1="
            << metrics::bleu1(outputs, refs_d2_to_d1.sentences) << '\n';
  }
  write_text_atomic(out, rep.to_key_value() + extra.str());
  std::cout << rep.to_key_value() << extra.str();
  return 0;
}

int run_elbo(const std::string& ckpt_path, const std::string& dir,
             const std::string& out, int repeats, const std::string& mode) {
  DataDir d{dir};
  require_file(ckpt_path, "model checkpoint");
  require_file(d.vocab_full(), "combined vocabulary");
  LoadedModel loaded = model_from_checkpoint(io::load_checkpoint(ckpt_path));
  Vocab vocab = Vocab::load(d.vocab_full());
  auto load = [&](const std::string& domain, const std::string& split) {
    std::string p = d.corpus(domain, split);
    require_file(p, domain + " " + split + " corpus");
    return data::load_corpus(p, vocab, domain == "d1" ? 0 : 1);
  };
  data::Corpus test_d1 = load("d1", "test"), test_d2 = load("d2", "test");

  // the elbo command needs the priors stored next to the model
  require_file(d.dir + "/lm1.ckpt", "prior checkpoint lm1.ckpt in data dir");
  require_file(d.dir + "/lm2.ckpt", "prior checkpoint lm2.ckpt in data dir");
  lm::LanguageModel lm1 = lm_from_checkpoint(io::load_checkpoint(d.dir + "/lm1.ckpt"));
  lm::LanguageModel lm2 = lm_from_checkpoint(io::load_checkpoint(d.dir + "/lm2.ckpt"));

  Rng rng(Rng::mix(loaded.cfg.seed, 0xe1b0));
  metrics::ElboReport rep = metrics::elbo_report(
      loaded.model, lm1, lm2, test_d1, test_d2, loaded.cfg.lambda, repeats,
      mode == "greedy", rng);
  std::ostringstream os;
  os << "elbo_per_word_mean=" << rep.mean << '\n'
     << "elbo_per_word_std=" << rep.stddev << '\n'
     << "repeats=" << repeats << '\n'
     << "mode=" << mode << '\n';
  write_text_atomic(out, os.str());
  std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentseq: unsupervised text style transfer with a deep "
               "latent sequence model"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic bigram corpus pair");
  std::string synth_out = "data";
  uint64_t synth_seed = 0;
  int synth_vocab = 30, synth_sentences = 5000, synth_val = 500,
      synth_test = 500, synth_len_min = 4, synth_len_max = 10;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--vocab-size", synth_vocab, "content vocabulary size");
  synth->add_option("--sentences", synth_sentences, "training sentences per domain");
  synth->add_option("--val", synth_val, "validation sentences per domain");
  synth->add_option("--test", synth_test, "test sentences per domain");
  synth->add_option("--len-min", synth_len_min, "minimum sentence length");
  synth->add_option("--len-max", synth_len_max, "maximum sentence length");

  // cipher
  auto* cipher = app.add_subcommand("cipher", "encipher the d2 half with a substitution key");
  std::string cipher_dir = "data";
  uint64_t cipher_seed = 0;
  cipher->add_option("--data", cipher_dir, "data directory from synth");
  cipher->add_option("--seed", cipher_seed, "key seed");

  // pretrain-lm
  auto* plm = app.add_subcommand("pretrain-lm", "pretrain a domain language-model prior");
  std::string plm_dir = "data", plm_domain = "d1", plm_out = "lm.ckpt";
  ConfigFlags plm_flags;
  plm->add_option("--data", plm_dir, "data directory");
  plm->add_option("--domain", plm_domain, "d1|d2")
      ->check(CLI::IsMember({"d1", "d2"}));
  plm->add_option("--out", plm_out, "checkpoint path");
  add_config_flags(plm, plm_flags);

  // train
  auto* tr = app.add_subcommand("train", "train the latent sequence model");
  std::string tr_dir = "data", tr_lm1, tr_lm2, tr_out = "run", tr_resume;
  ConfigFlags tr_flags;
  tr->add_option("--data", tr_dir, "data directory");
  tr->add_option("--lm1", tr_lm1, "pretrained D1 prior checkpoint")->required();
  tr->add_option("--lm2", tr_lm2, "pretrained D2 prior checkpoint")->required();
  tr->add_option("--out", tr_out, "output directory");
  tr->add_option("--resume", tr_resume, "resume from checkpoint");
  add_config_flags(tr, tr_flags);

  // transfer
  auto* tf = app.add_subcommand("transfer", "greedy style transfer of a corpus");
  std::string tf_ckpt, tf_input, tf_vocab, tf_dirn = "d2-d1", tf_out;
  tf->add_option("--checkpoint", tf_ckpt, "model checkpoint")->required();
  tf->add_option("--input", tf_input, "input corpus file")->required();
  tf->add_option("--vocab", tf_vocab, "vocabulary file")->required();
  tf->add_option("--direction", tf_dirn, "d1-d2|d2-d1")
      ->check(CLI::IsMember({"d1-d2", "d2-d1"}));
  tf->add_option("--out", tf_out, "output corpus file")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "full evaluation report");
  std::string ev_ckpt, ev_dir = "data", ev_lm1, ev_lm2, ev_out = "eval.txt";
  bool ev_refs = false, ev_key = false;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--data", ev_dir, "data directory");
  ev->add_option("--lm1", ev_lm1, "external D1 LM checkpoint")->required();
  ev->add_option("--lm2", ev_lm2, "external D2 LM checkpoint")->required();
  ev->add_option("--out", ev_out, "report path");
  ev->add_flag("--refs", ev_refs, "use parallel references when available");
  ev->add_flag("--key", ev_key, "score decipherment against key.txt");

  // elbo
  auto* eb = app.add_subcommand("elbo", "per-word ELBO report with repeats");
  std::string eb_ckpt, eb_dir = "data", eb_out = "elbo.txt", eb_mode = "sample";
  int eb_repeats = 10;
  eb->add_option("--checkpoint", eb_ckpt, "model checkpoint")->required();
  eb->add_option("--data", eb_dir, "data directory");
  eb->add_option("--out", eb_out, "report path");
  eb->add_option("--repeats", eb_repeats, "number of repetitions");
  eb->add_option("--mode", eb_mode, "greedy|sample")
      ->check(CLI::IsMember({"greedy", "sample"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth)
      return run_synth(synth_out, synth_seed, synth_vocab, synth_sentences,
                       synth_val, synth_test, synth_len_min, synth_len_max);
    if (*cipher) return run_cipher(cipher_dir, cipher_seed);
    if (*plm) return run_pretrain_lm(plm_dir, plm_domain, plm_out, plm_flags);
    if (*tr) return run_train(tr_dir, tr_lm1, tr_lm2, tr_out, tr_resume, tr_flags);
    if (*tf) return run_transfer(tf_ckpt, tf_input, tf_vocab, tf_dirn, tf_out);
    if (*ev) return run_eval(ev_ckpt, ev_dir, ev_lm1, ev_lm2, ev_out, ev_refs, ev_key);
    if (*eb) return run_elbo(eb_ckpt, eb_dir, eb_out, eb_repeats, eb_mode);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 1;
}
