#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "text.hpp"

namespace unionlm::metrics {

namespace {

constexpr int kBleuMaxOrder = 4;

std::string ngram_key(const std::vector<std::string>& toks, size_t start, int n) {
  std::string key = toks[start];
  for (int i = 1; i < n; ++i) {
    key.push_back('\x1f');
    key.append(toks[start + i]);
  }
  return key;
}

}  // namespace

double bleu(const std::vector<std::string>& candidates,
            const std::vector<std::vector<std::string>>& reference_sets) {
  if (candidates.empty()) throw InvalidArgError("bleu: empty candidate set");
  if (candidates.size() != reference_sets.size())
    throw InvalidArgError(strformat("bleu: %zu candidates but %zu reference sets",
                                    candidates.size(), reference_sets.size()));

  long long match[kBleuMaxOrder + 1] = {0};
  long long total[kBleuMaxOrder + 1] = {0};
  long long cand_len = 0, ref_len = 0;

  for (size_t i = 0; i < candidates.size(); ++i) {
    const std::vector<std::string>& refs = reference_sets[i];
    if (refs.empty() || refs.size() > 3)
      throw InvalidArgError(strformat("bleu: item %zu has %zu references (expected 1-3)", i,
                                      refs.size()));
    std::vector<std::string> cand = text::word_tokenize(candidates[i]);
    std::vector<std::vector<std::string>> ref_toks;
    ref_toks.reserve(refs.size());
    for (const std::string& r : refs) ref_toks.push_back(text::word_tokenize(r));

    long long c = static_cast<long long>(cand.size());
    cand_len += c;
    long long best_r = static_cast<long long>(ref_toks[0].size());
    for (const auto& rt : ref_toks) {
      long long r = static_cast<long long>(rt.size());
      long long d_new = std::llabs(r - c), d_old = std::llabs(best_r - c);
      if (d_new < d_old || (d_new == d_old && r < best_r)) best_r = r;
    }
    ref_len += best_r;

    for (int n = 1; n <= kBleuMaxOrder; ++n) {
      if (static_cast<int>(cand.size()) < n) break;
      std::unordered_map<std::string, long long> cand_counts;
      for (size_t s = 0; s + n <= cand.size(); ++s) ++cand_counts[ngram_key(cand, s, n)];
      total[n] += static_cast<long long>(cand.size()) - n + 1;

      std::unordered_map<std::string, long long> ref_max;
      for (const auto& rt : ref_toks) {
        if (static_cast<int>(rt.size()) < n) continue;
        std::unordered_map<std::string, long long> rc;
        for (size_t s = 0; s + n <= rt.size(); ++s) ++rc[ngram_key(rt, s, n)];
        for (const auto& [key, cnt] : rc) ref_max[key] = std::max(ref_max[key], cnt);
      }
      for (const auto& [key, cnt] : cand_counts) {
        auto it = ref_max.find(key);
        if (it != ref_max.end()) match[n] += std::min(cnt, it->second);
      }
    }
  }

  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  int used = 0;
  for (int n = 1; n <= kBleuMaxOrder; ++n) {
    if (total[n] == 0) continue;  // corpus too short to form any n-gram
    if (match[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
    ++used;
  }
  if (used == 0) return 0.0;
  double bp = cand_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_sum / used);
}

int uni(const std::string& source, const std::string& generation) {
  std::vector<std::string> src = text::metric_tokenize(source);
  std::unordered_set<std::string> seen(src.begin(), src.end());
  int n = 0;
  for (const std::string& tok : text::metric_tokenize(generation))
    if (!seen.count(tok)) ++n;
  return n;
}

int gen_length(const std::string& generation) {
  return static_cast<int>(text::metric_tokenize(generation).size());
}

void EaConfig::validate() const {
  if (hash_bits < 4 || hash_bits > 24)
    throw InvalidArgError("ea config: hash_bits must lie in [4, 24]");
  if (epochs < 1) throw InvalidArgError("ea config: epochs must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgError("ea config: lr must be > 0");
}

namespace {

// hashed unigram+bigram counts of source tokens, a separator, candidate tokens
std::map<uint32_t, double> ea_features(const std::string& source, const std::string& candidate,
                                       int bits) {
  std::vector<std::string> toks = text::word_tokenize(source);
  toks.push_back("\x01sep");
  for (std::string& t : text::word_tokenize(candidate)) toks.push_back(std::move(t));

  const uint32_t mask = (1u << bits) - 1;
  std::map<uint32_t, double> feats;
  for (size_t i = 0; i < toks.size(); ++i) {
    feats[static_cast<uint32_t>(fnv1a64("u:" + toks[i])) & mask] += 1.0;
    if (i + 1 < toks.size())
      feats[static_cast<uint32_t>(fnv1a64("b:" + toks[i] + "\x1f" + toks[i + 1])) & mask] += 1.0;
  }
  return feats;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

EaClassifier EaClassifier::fit(const std::vector<std::pair<std::string, std::string>>& accepted,
                               const std::vector<std::pair<std::string, std::string>>& rejected,
                               const EaConfig& cfg) {
  cfg.validate();
  if (accepted.empty()) throw InvalidArgError("ea: no accepted training pairs");
  if (rejected.empty()) throw InvalidArgError("ea: no rejected training pairs");

  struct Example {
    std::map<uint32_t, double> feats;
    double y;
  };
  std::vector<Example> examples;
  examples.reserve(accepted.size() + rejected.size());
  for (const auto& [src, cand] : accepted)
    examples.push_back({ea_features(src, cand, cfg.hash_bits), 1.0});
  for (const auto& [src, cand] : rejected)
    examples.push_back({ea_features(src, cand, cfg.hash_bits), 0.0});

  EaClassifier ea;
  ea.bits_ = cfg.hash_bits;
  ea.w_.assign(1ull << cfg.hash_bits, 0.0);
  ea.b_ = 0.0;

  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t idx : order) {
      const Example& ex = examples[idx];
      double z = ea.b_;
      for (const auto& [h, v] : ex.feats) z += ea.w_[h] * v;
      double err = sigmoid(z) - ex.y;
      for (const auto& [h, v] : ex.feats) ea.w_[h] -= cfg.lr * err * v;
      ea.b_ -= cfg.lr * err;
    }
  }
  return ea;
}

double EaClassifier::probability(const std::string& source, const std::string& candidate) const {
  double z = b_;
  for (const auto& [h, v] : ea_features(source, candidate, bits_)) z += w_[h] * v;
  return sigmoid(z);
}

double ea_score(const EaClassifier& ea,
                const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) throw InvalidArgError("ea_score: no pairs to score");
  long long yes = 0;
  for (const auto& [src, cand] : pairs)
    if (ea.approves(src, cand)) ++yes;
  return static_cast<double>(yes) / static_cast<double>(pairs.size());
}

MetricsRow evaluate_all(const std::string& system, const std::vector<std::string>& generations,
                        const std::vector<std::string>& sources,
                        const std::vector<std::vector<std::string>>& reference_sets,
                        const PplScorer& gen_scorer, const PplScorer& trg_scorer,
                        const EaClassifier& ea) {
  if (generations.empty()) throw InvalidArgError("evaluate: nothing to evaluate");
  if (generations.size() != sources.size() || generations.size() != reference_sets.size())
    throw InvalidArgError(strformat("evaluate: %zu generations, %zu sources, %zu reference sets",
                                    generations.size(), sources.size(), reference_sets.size()));

  MetricsRow row;
  row.system = system;
  row.bleu = bleu(generations, reference_sets);
  row.ppl_gen = gen_scorer.score(generations);
  row.ppl_trg = trg_scorer.score(generations);

  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(generations.size());
  std::vector<double> unis, lens;
  unis.reserve(generations.size());
  lens.reserve(generations.size());
  for (size_t i = 0; i < generations.size(); ++i) {
    pairs.emplace_back(sources[i], generations[i]);
    unis.push_back(static_cast<double>(uni(sources[i], generations[i])));
    lens.push_back(static_cast<double>(gen_length(generations[i])));
  }
  row.ea = ea_score(ea, pairs);
  row.uni = sample_mean_std(unis);
  row.length = sample_mean_std(lens);
  return row;
}

std::string MetricsRow::to_json() const {
  nlohmann::ordered_json j;
  j["system"] = system;
  j["bleu"] = bleu;
  j["ppl_gen"] = ppl_gen;
  j["ppl_trg"] = ppl_trg;
  j["ea"] = ea;
  j["uni_mean"] = uni.mean;
  j["uni_std"] = uni.stddev;
  j["length_mean"] = length.mean;
  j["length_std"] = length.stddev;
  j["error"] = error;
  return j.dump(2) + "\n";
}

MetricsRow MetricsRow::from_json(const std::string& content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strformat("metrics row: %s", e.what()));
  }
  MetricsRow row;
  try {
    row.system = j.at("system").get<std::string>();
    row.bleu = j.at("bleu").get<double>();
    row.ppl_gen = j.at("ppl_gen").get<double>();
    row.ppl_trg = j.at("ppl_trg").get<double>();
    row.ea = j.at("ea").get<double>();
    row.uni.mean = j.at("uni_mean").get<double>();
    row.uni.stddev = j.at("uni_std").get<double>();
    row.length.mean = j.at("length_mean").get<double>();
    row.length.stddev = j.at("length_std").get<double>();
    row.error = j.value("error", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strformat("metrics row: %s", e.what()));
  }
  return row;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string MetricsReport::to_csv() const {
  std::string out = "system,bleu,ppl_gen,ppl_trg,ea,uni_mean,uni_std,length_mean,length_std,error\n";
  for (const MetricsRow& row : rows) {
    out += csv_escape(row.system);
    if (row.error.empty()) {
      out += strformat(",%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,", row.bleu, row.ppl_gen,
                       row.ppl_trg, row.ea, row.uni.mean, row.uni.stddev, row.length.mean,
                       row.length.stddev);
    } else {
      out += ",,,,,,,,,";
      out += csv_escape(row.error);
    }
    out.push_back('\n');
  }
  return out;
}

std::string MetricsReport::to_table() const {
  const std::vector<std::string> headers = {"System", "BLEU",   "PPL-Gen", "PPL-Trg",
                                            "EA",     "UNI",    "Length"};
  std::vector<std::vector<std::string>> cells;
  for (const MetricsRow& row : rows) {
    std::vector<std::string> line{row.system};
    if (row.error.empty()) {
      line.push_back(strformat("%.4f", row.bleu));
      line.push_back(strformat("%.2f", row.ppl_gen));
      line.push_back(strformat("%.2f", row.ppl_trg));
      line.push_back(strformat("%.4f", row.ea));
      line.push_back(strformat("%.2f +/- %.2f", row.uni.mean, row.uni.stddev));
      line.push_back(strformat("%.2f +/- %.2f", row.length.mean, row.length.stddev));
    } else {
      for (int i = 0; i < 6; ++i) line.push_back("-");
    }
    cells.push_back(std::move(line));
  }

  std::vector<size_t> width(headers.size());
  for (size_t c = 0; c < headers.size(); ++c) {
    width[c] = headers[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  auto render = [&width](const std::vector<std::string>& line) {
    std::string out;
    for (size_t c = 0; c < line.size(); ++c) {
      if (c) out += "  ";
      if (c == 0) {
        out += line[c];
        out.append(width[c] - line[c].size(), ' ');
      } else {
        out.append(width[c] - line[c].size(), ' ');
        out += line[c];
      }
    }
    return out;
  };

  std::string out = render(headers) + "\n";
  size_t rule = 0;
  for (size_t c = 0; c < width.size(); ++c) rule += width[c] + (c ? 2 : 0);
  out.append(rule, '-');
  out.push_back('\n');
  for (size_t r = 0; r < cells.size(); ++r) {
    out += render(cells[r]);
    if (!rows[r].error.empty()) out += "  failed: " + rows[r].error;
    out.push_back('\n');
  }
  return out;
}

}  // namespace unionlm::metrics
