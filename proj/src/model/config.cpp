#include "mlvae/model/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mlvae/errors.hpp"

namespace mlvae {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

template <typename U>
U parse_int(const std::string& key, const std::string& text) {
  U v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<std::size_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("config: '" + key + "' expects a comma-separated list");
  return out;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::FlatLM:
      return "flat-LM";
    case Variant::MlLM:
      return "ml-LM";
    case Variant::FlatVAE:
      return "flat-VAE";
    case Variant::MlVAES:
      return "ml-VAE-S";
    case Variant::MlVAED:
      return "ml-VAE-D";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  for (auto v : {Variant::FlatLM, Variant::MlLM, Variant::FlatVAE, Variant::MlVAES, Variant::MlVAED}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + std::string(text) +
                    "' (expected flat-LM, ml-LM, flat-VAE, ml-VAE-S or ml-VAE-D)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("config: ") + name + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(embed_dim, "embed_dim");
  positive(sentence_filters, "sentence_filters");
  positive(paragraph_filters, "paragraph_filters");
  positive(z2_hidden, "z2_hidden");
  positive(latent_dim, "latent_dim");
  positive(prior_hidden, "prior_hidden");
  positive(plan_dim, "plan_dim");
  positive(word_hidden, "word_hidden");
  positive(max_sentences, "max_sentences");
  positive(max_words, "max_words");
  positive(batch_size, "batch_size");
  if (vocab_size < 4) throw ConfigError("config: vocab_size must exceed the reserved ids");
  if (sentence_widths.empty() || paragraph_widths.empty()) throw ConfigError("config: CNN widths must be nonempty");
  for (auto w : sentence_widths) positive(w, "sentence_widths");
  for (auto w : paragraph_widths) positive(w, "paragraph_widths");
  if (anneal_start > anneal_end) throw ConfigError("config: anneal_start must not exceed anneal_end");
  if (!(log_var_min < log_var_max)) throw ConfigError("config: log_var_min must be below log_var_max");
  if (!(lr > 0)) throw ConfigError("config: lr must be positive");
  if (!(heldout_fraction >= 0 && heldout_fraction < 1)) throw ConfigError("config: heldout_fraction must be in [0, 1)");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"variant", std::string(to_string(variant))},
      {"vocab_size", std::to_string(vocab_size)},
      {"embed_dim", std::to_string(embed_dim)},
      {"sentence_widths", fmt_list(sentence_widths)},
      {"sentence_filters", std::to_string(sentence_filters)},
      {"paragraph_widths", fmt_list(paragraph_widths)},
      {"paragraph_filters", std::to_string(paragraph_filters)},
      {"z2_hidden", std::to_string(z2_hidden)},
      {"latent_dim", std::to_string(latent_dim)},
      {"prior_hidden", std::to_string(prior_hidden)},
      {"log_var_min", fmt_double(log_var_min)},
      {"log_var_max", fmt_double(log_var_max)},
      {"plan_dim", std::to_string(plan_dim)},
      {"word_hidden", std::to_string(word_hidden)},
      {"max_sentences", std::to_string(max_sentences)},
      {"max_words", std::to_string(max_words)},
      {"generate_sentences", std::to_string(generate_sentences)},
      {"paired", paired ? "true" : "false"},
      {"lr", fmt_double(lr)},
      {"beta1", fmt_double(beta1)},
      {"beta2", fmt_double(beta2)},
      {"adam_eps", fmt_double(adam_eps)},
      {"clip_norm", fmt_double(clip_norm)},
      {"init_scale", fmt_double(init_scale)},
      {"anneal_start", std::to_string(anneal_start)},
      {"anneal_end", std::to_string(anneal_end)},
      {"batch_size", std::to_string(batch_size)},
      {"max_steps", std::to_string(max_steps)},
      {"seed", std::to_string(seed)},
      {"precision", precision == Precision::F32 ? "f32" : "f64"},
      {"heldout_fraction", fmt_double(heldout_fraction)},
      {"log_interval", std::to_string(log_interval)},
      {"eval_interval", std::to_string(eval_interval)},
      {"checkpoint_interval", std::to_string(checkpoint_interval)},
  };
}

void ModelConfig::apply(const std::map<std::string, std::string>& values) {
  for (const auto& [key, raw] : values) {
    const std::string v = trim(raw);
    if (key == "variant") variant = parse_variant(v);
    else if (key == "vocab_size") vocab_size = parse_int<std::size_t>(key, v);
    else if (key == "embed_dim") embed_dim = parse_int<std::size_t>(key, v);
    else if (key == "sentence_widths") sentence_widths = parse_list(key, v);
    else if (key == "sentence_filters") sentence_filters = parse_int<std::size_t>(key, v);
    else if (key == "paragraph_widths") paragraph_widths = parse_list(key, v);
    else if (key == "paragraph_filters") paragraph_filters = parse_int<std::size_t>(key, v);
    else if (key == "z2_hidden") z2_hidden = parse_int<std::size_t>(key, v);
    else if (key == "latent_dim") latent_dim = parse_int<std::size_t>(key, v);
    else if (key == "prior_hidden") prior_hidden = parse_int<std::size_t>(key, v);
    else if (key == "log_var_min") log_var_min = parse_double(key, v);
    else if (key == "log_var_max") log_var_max = parse_double(key, v);
    else if (key == "plan_dim") plan_dim = parse_int<std::size_t>(key, v);
    else if (key == "word_hidden") word_hidden = parse_int<std::size_t>(key, v);
    else if (key == "max_sentences") max_sentences = parse_int<std::size_t>(key, v);
    else if (key == "max_words") max_words = parse_int<std::size_t>(key, v);
    else if (key == "generate_sentences") generate_sentences = parse_int<std::size_t>(key, v);
    else if (key == "paired") paired = parse_bool(key, v);
    else if (key == "lr") lr = parse_double(key, v);
    else if (key == "beta1") beta1 = parse_double(key, v);
    else if (key == "beta2") beta2 = parse_double(key, v);
    else if (key == "adam_eps") adam_eps = parse_double(key, v);
    else if (key == "clip_norm") clip_norm = parse_double(key, v);
    else if (key == "init_scale") init_scale = parse_double(key, v);
    else if (key == "anneal_start") anneal_start = parse_int<std::int64_t>(key, v);
    else if (key == "anneal_end") anneal_end = parse_int<std::int64_t>(key, v);
    else if (key == "batch_size") batch_size = parse_int<std::size_t>(key, v);
    else if (key == "max_steps") max_steps = parse_int<std::size_t>(key, v);
    else if (key == "seed") seed = parse_int<std::uint64_t>(key, v);
    else if (key == "precision") {
      if (v == "f32") precision = Precision::F32;
      else if (v == "f64") precision = Precision::F64;
      else throw ConfigError("config: precision must be f32 or f64");
    } else if (key == "heldout_fraction") heldout_fraction = parse_double(key, v);
    else if (key == "log_interval") log_interval = parse_int<std::size_t>(key, v);
    else if (key == "eval_interval") eval_interval = parse_int<std::size_t>(key, v);
    else if (key == "checkpoint_interval") checkpoint_interval = parse_int<std::size_t>(key, v);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

std::string ModelConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::stringstream ss{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    out[trim(std::string_view(body).substr(0, eq))] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  c.apply(parse_key_values(text));
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void ModelConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config '" + path.string() + "'");
  out << to_text();
}

}  // namespace mlvae
