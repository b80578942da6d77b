#pragma once

// Tweet records, vocabulary, fixed-length encoding and the user registry.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ranges>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "text.hpp"

namespace clex {

using Timestamp = std::int64_t;

struct Tweet {
  std::string id;
  std::string author;
  Timestamp timestamp = 0;
  std::string text;
  std::optional<Label> label;
  std::optional<std::string> retweet_source;
  std::vector<std::string> mentions;
  std::vector<std::string> tokens;
};

/// Display names compare case-insensitively; this is the canonical key.
inline std::string canonical_name(std::string_view name) {
  std::string out(name);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnknown = 1;
  static constexpr std::int32_t kUser = 2;
  static constexpr std::int32_t kUrl = 3;
  static constexpr std::int32_t kNumReserved = 4;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnknownToken = "UNKNOWN";

  Vocab() {
    for (auto t : {kPadToken, kUnknownToken, std::string_view("user"), std::string_view("url")})
      push(std::string(t));
  }

  std::size_t size() const { return tokens_.size(); }

  std::optional<std::int32_t> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Index of `token`, or UNKNOWN when absent.
  std::int32_t index(const std::string& token) const {
    return find(token).value_or(kUnknown);
  }

  const std::string& token(std::int32_t i) const { return tokens_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static bool is_reserved_token(std::string_view t) {
    return t == kPadToken || t == kUnknownToken || t == "user" || t == "url";
  }

  /// Appends a content token; no-op if already present.
  void push(std::string token) {
    if (index_.contains(token)) return;
    index_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write vocabulary: " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot read vocabulary: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (lines.size() < kNumReserved || lines[0] != kPadToken || lines[1] != kUnknownToken ||
        lines[2] != "user" || lines[3] != "url")
      throw ValidationError("vocabulary file lacks reserved header: " + path.string());
    Vocab v;
    for (std::size_t i = kNumReserved; i < lines.size(); ++i) {
      if (v.index_.contains(lines[i]))
        throw ValidationError("duplicate vocabulary token: " + lines[i]);
      v.push(lines[i]);
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

inline constexpr std::size_t kDefaultMaxTokens = 40000;

/// Keeps the `max_tokens` most frequent tokens; frequency ties go to the
/// token seen first.
template <std::ranges::input_range Stream>
Vocab build_vocab(const Stream& stream, std::size_t max_tokens = kDefaultMaxTokens) {
  struct Entry {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> freq;
  std::size_t order = 0;
  std::size_t sequences = 0;
  for (const auto& seq : stream) {
    ++sequences;
    for (const auto& tok : seq) {
      if (Vocab::is_reserved_token(tok)) continue;
      auto [it, inserted] = freq.try_emplace(std::string(tok));
      if (inserted) it->second.first = order++;
      ++it->second.count;
    }
  }
  if (sequences == 0) throw ValidationError("empty corpus");

  std::vector<std::pair<const std::string*, Entry>> ranked;
  ranked.reserve(freq.size());
  for (const auto& [tok, e] : freq) ranked.emplace_back(&tok, e);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first < b.second.first;
  });
  if (ranked.size() > max_tokens) ranked.resize(max_tokens);

  Vocab vocab;
  for (const auto& [tok, e] : ranked) vocab.push(*tok);
  return vocab;
}

inline constexpr std::size_t kSequenceLength = 50;

struct EncodedTweet {
  std::array<std::int32_t, kSequenceLength> indices{};
  bool operator==(const EncodedTweet&) const = default;
};

/// Variable-length index sequence; out-of-vocabulary tokens become UNKNOWN.
inline std::vector<std::int32_t> index_tokens(const std::vector<std::string>& tokens,
                                              const Vocab& vocab) {
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.index(t));
  return out;
}

/// Right-pads with PAD or truncates to exactly 50 indices.
inline EncodedTweet encode_tweet(const std::vector<std::string>& tokens, const Vocab& vocab) {
  EncodedTweet enc;
  enc.indices.fill(Vocab::kPad);
  const std::size_t n = std::min(tokens.size(), kSequenceLength);
  for (std::size_t i = 0; i < n; ++i) enc.indices[i] = vocab.index(tokens[i]);
  return enc;
}

// ---------------------------------------------------------------------------
// References and users

namespace detail {

inline bool is_name_byte(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace detail

/// Name from a leading "RT @name:" pattern, if any.
inline std::optional<std::string> scan_retweet_source(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  if (text.substr(i, 4) != "RT @" && text.substr(i, 4) != "rt @") return std::nullopt;
  i += 4;
  std::size_t b = i;
  while (i < text.size() && detail::is_name_byte(text[i])) ++i;
  if (i == b || i >= text.size() || text[i] != ':') return std::nullopt;
  return std::string(text.substr(b, i - b));
}

/// Every "@name" occurrence not preceded by a name character, in order,
/// including the one inside a leading retweet pattern.
inline std::vector<std::string> scan_mentions(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '@') continue;
    if (i > 0 && detail::is_name_byte(text[i - 1])) continue;
    std::size_t j = i + 1;
    while (j < text.size() && detail::is_name_byte(text[j])) ++j;
    if (j > i + 1) out.emplace_back(text.substr(i + 1, j - i - 1));
    i = j - 1;
  }
  return out;
}

/// Raw (unfiltered) references of a tweet with canonical names: the retweet
/// source from metadata or text, and the remaining distinct mentions.
struct References {
  std::optional<std::string> retweet_source;
  std::vector<std::string> mentions;
};

inline References raw_references(const Tweet& tweet) {
  References refs;
  auto from_text = scan_retweet_source(tweet.text);
  if (tweet.retweet_source)
    refs.retweet_source = canonical_name(*tweet.retweet_source);
  else if (from_text)
    refs.retweet_source = canonical_name(*from_text);

  auto names = scan_mentions(tweet.text);
  std::size_t skip = from_text ? 1 : 0;  // the "RT @name:" occurrence
  std::set<std::string> seen;
  for (std::size_t i = skip; i < names.size(); ++i) {
    auto n = canonical_name(names[i]);
    if (seen.insert(n).second) refs.mentions.push_back(std::move(n));
  }
  return refs;
}

class UserRegistry {
 public:
  bool contains(std::string_view name) const { return counts_.contains(canonical_name(name)); }

  std::size_t count(std::string_view name) const {
    auto it = counts_.find(canonical_name(name));
    return it == counts_.end() ? 0 : it->second;
  }

  std::size_t size() const { return counts_.size(); }
  bool empty() const { return counts_.empty(); }

  /// Sorted name -> involvement count.
  const std::map<std::string, std::size_t>& counts() const { return counts_; }

  void add(std::string name, std::size_t count) { counts_[canonical_name(name)] = count; }

 private:
  std::map<std::string, std::size_t> counts_;
};

inline constexpr std::size_t kMinInvolvement = 2;

/// Counts authored, retweeted-from and mentioned-in tweets over both corpora
/// and keeps users involved at least twice.
inline UserRegistry build_user_registry(const std::vector<Tweet>& labeled,
                                        const std::vector<Tweet>& unlabeled) {
  std::map<std::string, std::size_t> counts;
  auto visit = [&](const Tweet& t) {
    ++counts[canonical_name(t.author)];
    auto refs = raw_references(t);
    if (refs.retweet_source) ++counts[*refs.retweet_source];
    for (const auto& m : refs.mentions) ++counts[m];
  };
  for (const auto& t : labeled) visit(t);
  for (const auto& t : unlabeled) visit(t);
  UserRegistry reg;
  for (auto& [name, c] : counts)
    if (c >= kMinInvolvement) reg.add(name, c);
  return reg;
}

/// References of `tweet` restricted to registered users.
inline References extract_references(const Tweet& tweet, const UserRegistry& registry) {
  References refs = raw_references(tweet);
  if (refs.retweet_source && !registry.contains(*refs.retweet_source)) refs.retweet_source.reset();
  std::erase_if(refs.mentions, [&](const std::string& m) { return !registry.contains(m); });
  return refs;
}

/// Fills tokens and registered references in place.
inline void annotate(std::vector<Tweet>& tweets, const UserRegistry& registry,
                     NormalizeStats* stats = nullptr) {
  for (auto& t : tweets) {
    t.tokens = normalize_tweet(t.text, stats);
    auto refs = extract_references(t, registry);
    t.retweet_source = refs.retweet_source;
    t.mentions = std::move(refs.mentions);
  }
}

// ---------------------------------------------------------------------------
// JSON-lines I/O

struct IngestStats {
  std::size_t lines = 0;
  std::size_t malformed = 0;
};

inline std::optional<Tweet> parse_tweet_line(const std::string& line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto str = [&](const char* key) -> const nlohmann::json* {
    auto it = j.find(key);
    return (it != j.end() && it->is_string()) ? &*it : nullptr;
  };
  const auto* id = str("id");
  const auto* user = str("user");
  const auto* text = str("text");
  auto ts = j.find("ts");
  if (!id || !user || !text || ts == j.end() || !ts->is_number_integer()) return std::nullopt;
  Tweet t;
  t.id = id->get<std::string>();
  t.author = user->get<std::string>();
  t.text = text->get<std::string>();
  t.timestamp = ts->get<std::int64_t>();
  if (t.timestamp < 0 || t.id.empty() || t.author.empty()) return std::nullopt;
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) return std::nullopt;
    auto l = parse_label(it->get<std::string>());
    if (!l) return std::nullopt;
    t.label = *l;
  }
  if (auto it = j.find("rt_of"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) return std::nullopt;
    t.retweet_source = it->get<std::string>();
  }
  return t;
}

inline constexpr double kMaxMalformedFraction = 0.10;

/// Reads one tweet per line. Malformed lines and duplicate ids are skipped and
/// counted; more than 10% malformed is a hard error.
inline std::vector<Tweet> ingest(const std::filesystem::path& path, IngestStats* stats = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read tweet file: " + path.string());
  IngestStats st;
  std::vector<Tweet> out;
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++st.lines;
    auto t = parse_tweet_line(line);
    if (!t || !ids.insert(t->id).second) {
      ++st.malformed;
      continue;
    }
    out.push_back(std::move(*t));
  }
  if (stats) *stats = st;
  if (st.malformed > 0) {
    log::warn(path.string() + ": skipped " + std::to_string(st.malformed) + " malformed line(s)");
    if (static_cast<double>(st.malformed) > kMaxMalformedFraction * static_cast<double>(st.lines))
      throw ValidationError(path.string() + ": more than 10% malformed lines (" +
                            std::to_string(st.malformed) + "/" + std::to_string(st.lines) + ")");
  }
  return out;
}

inline nlohmann::json to_json(const Tweet& t) {
  nlohmann::json j;
  j["id"] = t.id;
  j["user"] = t.author;
  j["ts"] = t.timestamp;
  j["text"] = t.text;
  if (t.label) j["label"] = std::string(to_string(*t.label));
  if (t.retweet_source) j["rt_of"] = *t.retweet_source;
  return j;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Tweet>& tweets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write tweet file: " + path.string());
  for (const auto& t : tweets) out << to_json(t).dump() << '\n';
}

}  // namespace clex
