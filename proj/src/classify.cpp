#include "nl2flow/classify.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "json_io.hpp"
#include "nl2flow/error.hpp"
#include "text_util.hpp"

namespace nl2flow {

namespace {

bool is_word_char(char c) { return detail::is_alnum(c) || c == '_'; }

SparseVector weigh(const std::vector<std::string>& tokens,
                   const std::map<std::string, double, std::less<>>& idf, double unseen) {
  std::map<std::string, double> tf;
  for (const auto& t : tokens) tf[t] += 1.0;
  SparseVector v;
  double norm2 = 0.0;
  for (const auto& [tok, count] : tf) {
    auto it = idf.find(tok);
    const double w = count * (it == idf.end() ? unseen : it->second);
    v.emplace_back(tok, w);
    norm2 += w * w;
  }
  const double norm = std::sqrt(norm2);
  if (norm > 0) {
    for (auto& [tok, w] : v) w /= norm;
  }
  return v;
}

double dot(const SparseVector& a, const SparseVector& b) {
  double sum = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      sum += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return sum;
}

/// Lowercase words of a keyword, split on whitespace and underscores.
std::vector<std::string> keyword_words(std::string_view keyword) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : detail::to_lower(keyword)) {
    if (c == '_' || detail::is_space(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

bool matches_at(const std::string& text, std::size_t pos, const std::vector<std::string>& words) {
  if (pos > 0 && is_word_char(text[pos - 1])) return false;
  std::size_t i = pos;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w > 0) {
      std::size_t sep = i;
      while (sep < text.size() && (text[sep] == '_' || detail::is_space(text[sep]))) ++sep;
      if (sep == i) return false;
      i = sep;
    }
    if (text.compare(i, words[w].size(), words[w]) != 0) return false;
    i += words[w].size();
  }
  return i >= text.size() || !is_word_char(text[i]);
}

bool contains_phrase(const std::string& text, const std::vector<std::string>& words) {
  if (words.empty()) return false;
  for (auto pos = text.find(words.front()); pos != std::string::npos; pos = text.find(words.front(), pos + 1)) {
    if (matches_at(text, pos, words)) return true;
  }
  return false;
}

}  // namespace

std::optional<std::string> Classification::top() const {
  if (!matched || ranked.empty()) return std::nullopt;
  return ranked.front().label;
}

nlohmann::json to_json(const Classification& c) {
  nlohmann::json ranked = nlohmann::json::array();
  for (const auto& r : c.ranked) ranked.push_back({{"label", r.label}, {"score", r.score}});
  return {{"ranked", ranked}, {"matched", c.matched}};
}

Classification classification_from_json(const nlohmann::json& j) {
  const std::string locus = "classification";
  Classification c;
  const auto& ranked = detail::require_array(j, "ranked", locus);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto item_locus = fmt::format("{}.ranked[{}]", locus, i);
    const auto& score = detail::require(ranked[i], "score", item_locus);
    if (!score.is_number()) throw ParseError(item_locus + ".score", "expected a number");
    c.ranked.push_back({detail::require_string(ranked[i], "label", item_locus), score.get<double>()});
  }
  const auto& matched = detail::require(j, "matched", locus);
  if (!matched.is_boolean()) throw ParseError(locus + ".matched", "expected a boolean");
  c.matched = matched.get<bool>();
  return c;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (detail::is_alnum(c)) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

ClassifierModel train(std::span<const TrainingPair> pairs, const Catalog* catalog, double threshold) {
  if (pairs.empty()) throw Error("cannot train a classifier on an empty training set");
  if (threshold < 0.0 || threshold > 1.0) throw Error(fmt::format("threshold {} outside [0, 1]", threshold));

  std::vector<std::vector<std::string>> docs;
  std::map<std::string, int> df;
  std::vector<std::string> problems;
  for (const auto& p : pairs) {
    if (catalog && !catalog->contains(p.label)) {
      problems.push_back(fmt::format("unknown label '{}' for utterance \"{}\"", p.label, p.utterance));
    }
    auto tokens = tokenize(p.utterance);
    if (tokens.empty()) problems.push_back(fmt::format("utterance \"{}\" has no tokens", p.utterance));
    for (const auto& t : std::set<std::string>(tokens.begin(), tokens.end())) ++df[t];
    docs.push_back(std::move(tokens));
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));

  ClassifierModel model;
  model.threshold = threshold;
  const double n = static_cast<double>(pairs.size());
  for (const auto& [tok, count] : df) model.idf[tok] = std::log((1.0 + n) / (1.0 + count)) + 1.0;
  model.unseen_idf = std::log(1.0 + n) + 1.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    model.exemplars.push_back({weigh(docs[i], model.idf, model.unseen_idf), pairs[i].label});
  }
  return model;
}

Classification classify(const ClassifierModel& model, std::string_view text) {
  Classification result;
  const auto tokens = tokenize(text);
  if (tokens.empty()) return result;
  const auto query = weigh(tokens, model.idf, model.unseen_idf);

  std::map<std::string, double> best;
  for (const auto& ex : model.exemplars) {
    const double s = std::clamp(dot(query, ex.vector), 0.0, 1.0);
    auto [it, inserted] = best.emplace(ex.label, s);
    if (!inserted) it->second = std::max(it->second, s);
  }
  for (const auto& [label, score] : best) {
    if (score > 0.0) result.ranked.push_back({label, score});
  }
  std::stable_sort(result.ranked.begin(), result.ranked.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  result.matched = !result.ranked.empty() && result.ranked.front().score >= model.threshold;
  return result;
}

std::set<std::string> keyword_scan(const Catalog& catalog, std::string_view text) {
  const auto lowered = detail::to_lower(text);
  std::set<std::string> found;
  for (const auto& [keyword, stages] : catalog.synonym_index()) {
    if (std::includes(found.begin(), found.end(), stages.begin(), stages.end())) continue;
    if (contains_phrase(lowered, keyword_words(keyword))) found.insert(stages.begin(), stages.end());
  }
  return found;
}

std::vector<TrainingPair> parse_training_pairs(std::string_view text, std::string_view source) {
  std::vector<TrainingPair> pairs;
  const auto body = detail::trim(text);
  if (!body.empty() && body.front() == '[') {
    auto doc = detail::parse_json(text, source);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto locus = fmt::format("{}[{}]", source, i);
      pairs.push_back({detail::require_string(doc[i], "utterance", locus),
                       detail::require_string(doc[i], "label", locus)});
    }
    return pairs;
  }
  const auto lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = detail::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(fmt::format("{}:{}", source, i + 1), "expected label<TAB>utterance");
    }
    pairs.push_back({std::string(detail::trim(line.substr(tab + 1))), std::string(detail::trim(line.substr(0, tab)))});
  }
  return pairs;
}

std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& path) {
  return parse_training_pairs(detail::read_text_file(path), path.string());
}

}  // namespace nl2flow
