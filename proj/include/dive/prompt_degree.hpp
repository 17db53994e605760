#pragma once

// Dynamic degree (1..5) for a benchmark prompt + image: cached chat-completion
// verdicts with an offline lexicon fallback.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dive/assets.hpp"
#include "dive/detail/httplib.hpp"
#include "dive/detail/json_util.hpp"
#include "dive/parallel.hpp"
#include "dive/sha256.hpp"

namespace dive {

enum class DegreeSource { Llm, Lexicon, Manifest };

inline std::string to_string(DegreeSource s) {
  switch (s) {
    case DegreeSource::Llm: return "llm";
    case DegreeSource::Lexicon: return "lexicon";
    case DegreeSource::Manifest: return "manifest";
  }
  return "unknown";
}

inline DegreeSource degree_source_from_string(std::string_view s) {
  if (s == "llm") return DegreeSource::Llm;
  if (s == "lexicon") return DegreeSource::Lexicon;
  if (s == "manifest") return DegreeSource::Manifest;
  throw input_error("unknown degree source '" + std::string(s) + "'");
}

struct DegreeAnnotation {
  std::string item_id;
  int degree = 2;
  DegreeSource source = DegreeSource::Lexicon;
  std::string raw_reply;  // llm only

  bool operator==(const DegreeAnnotation&) const = default;
};

inline nlohmann::json to_json(const DegreeAnnotation& a) {
  nlohmann::json j = {{"item_id", a.item_id}, {"degree", a.degree}, {"source", to_string(a.source)}};
  if (a.source == DegreeSource::Llm) j["raw_reply"] = a.raw_reply;
  return j;
}

inline DegreeAnnotation degree_annotation_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "degree annotation";
  DegreeAnnotation a;
  a.item_id = detail::read_req<std::string>(j, "item_id", ctx);
  a.degree = detail::read_req<int>(j, "degree", ctx);
  a.source = degree_source_from_string(detail::read_req<std::string>(j, "source", ctx));
  detail::read_opt(j, "raw_reply", a.raw_reply, ctx);
  if (a.degree < 1 || a.degree > 5) throw input_error("degree out of range 1..5");
  return a;
}

// ---------------------------------------------------------------------------
// Lexicon

class Lexicon {
 public:
  static constexpr int kDefaultDegree = 2;

  static Lexicon parse(std::string_view text) {
    Lexicon lex;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream fields(line);
      std::string stem;
      int grade = 0;
      if (!(fields >> stem >> grade) || grade < 1 || grade > 5)
        throw input_error("lexicon line " + std::to_string(lineno) + ": expected '<stem> <grade 1..5>'");
      std::transform(stem.begin(), stem.end(), stem.begin(), [](unsigned char c) { return std::tolower(c); });
      lex.entries_.emplace_back(std::move(stem), grade);
    }
    return lex;
  }

  static Lexicon builtin() { return parse(assets::kDegreeLexicon); }
  static Lexicon from_file(const std::filesystem::path& path) { return parse(detail::read_text_file(path)); }

  /// Highest grade among tokens starting with a stem; kDefaultDegree when none match.
  int degree(std::string_view prompt) const {
    int best = 0;
    for (const auto& token : tokenize(prompt))
      for (const auto& [stem, grade] : entries_)
        if (token.compare(0, stem.size(), stem) == 0) best = std::max(best, grade);
    return best == 0 ? kDefaultDegree : best;
  }

  static std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
      if (std::isalpha(c)) {
        cur.push_back(static_cast<char>(std::tolower(c)));
      } else if (!cur.empty()) {
        tokens.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
  }

  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, int>> entries_;
};

inline int lexicon_degree(std::string_view prompt) {
  static const Lexicon lex = Lexicon::builtin();
  return lex.degree(prompt);
}

/// First maximal digit run whose value is in 1..5.
inline std::optional<int> parse_degree_reply(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j - i == 1) {
      const int d = reply[i] - '0';
      if (d >= 1 && d <= 5) return d;
    }
    i = j;
  }
  return std::nullopt;
}

inline std::string render_request(std::string_view tmpl, std::string_view prompt, std::string_view image) {
  std::string out(tmpl);
  auto replace_all = [&](std::string_view key, std::string_view value) {
    for (std::size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
      out.replace(pos, key.size(), value);
  };
  replace_all("{prompt}", prompt);
  replace_all("{image}", image);
  return out;
}

// ---------------------------------------------------------------------------
// Chat client

struct LlmClientConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
  std::string model = "gpt-4o";
  std::string api_key_env = "DIVE_LLM_API_KEY";
  double timeout = 30.0;  // seconds
  int max_retries = 2;
  int max_in_flight = 4;

  void validate() const {
    if (max_retries < 0) throw input_error("llm.max_retries must be >= 0");
    if (!(timeout > 0)) throw input_error("llm.timeout must be > 0");
    if (max_in_flight < 1) throw input_error("llm.max_in_flight must be >= 1");
  }
};

/// One user message in, reply text out. Throws on transport/protocol failure.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::string& user_text) = 0;
};

/// Extracts the first message text from an OpenAI-style or bare reply body.
inline std::optional<std::string> reply_text(const nlohmann::json& body) {
  auto content_of = [](const nlohmann::json& msg) -> std::optional<std::string> {
    if (!msg.is_object() || !msg.contains("content")) return std::nullopt;
    const auto& c = msg["content"];
    if (c.is_string()) return c.get<std::string>();
    if (c.is_array())
      for (const auto& part : c)
        if (part.is_object() && part.contains("text") && part["text"].is_string()) return part["text"].get<std::string>();
    return std::nullopt;
  };
  if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty())
    return content_of(body["choices"][0].value("message", nlohmann::json::object()));
  if (body.contains("message")) return content_of(body["message"]);
  if (body.contains("messages") && body["messages"].is_array() && !body["messages"].empty())
    return content_of(body["messages"][0]);
  return content_of(body);
}

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(LlmClientConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw input_error("llm.endpoint must be an absolute URL");
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    origin_ = cfg_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
  }

  std::string complete(const std::string& user_text) override {
    httplib::Client cli(origin_);
    const auto secs = static_cast<time_t>(cfg_.timeout);
    const auto usecs = static_cast<time_t>((cfg_.timeout - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const nlohmann::json body = {{"model", cfg_.model},
                                 {"messages", nlohmann::json::array({{{"role", "user"}, {"content", user_text}}})}};
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw std::runtime_error("chat request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw std::runtime_error("chat request returned HTTP " + std::to_string(res->status));
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("chat reply is not JSON: ") + e.what());
    }
    auto text = reply_text(reply);
    if (!text) throw std::runtime_error("chat reply has no message text");
    return *text;
  }

 private:
  LlmClientConfig cfg_;
  std::string origin_;
  std::string path_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Cache

/// SHA-256 of prompt || image-file digest (the path string when the file is unreadable).
inline std::string degree_cache_key(std::string_view prompt, const std::filesystem::path& image) {
  std::string image_digest = sha256_file(image);
  if (image_digest.empty()) image_digest = "path:" + image.string();
  return Sha256().update(prompt).update(image_digest).hex();
}

/// Append-only JSONL cache: one {key, annotation...} object per line.
class DegreeCache {
 public:
  DegreeCache() = default;  // in-memory only
  explicit DegreeCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        entries_[detail::read_req<std::string>(j, "key", "cache")] = degree_annotation_from_json(j);
      } catch (const std::exception& e) {
        throw input_error(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  std::optional<DegreeAnnotation> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void append(const std::string& key, const DegreeAnnotation& a) {
    std::lock_guard lock(mu_);
    entries_[key] = a;
    if (path_.empty()) return;
    auto j = to_json(a);
    j["key"] = key;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw input_error("cannot append to " + path_.string());
    out << j.dump() << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, DegreeAnnotation> entries_;
};

// ---------------------------------------------------------------------------
// Annotator

struct DegreeItem {
  std::string item_id;
  std::string prompt;
  std::filesystem::path image_path;
};

using WarningSink = std::function<void(const std::string&)>;

inline void warn_to_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

class DegreeAnnotator {
 public:
  /// `client` may be null (offline). `cache` may be null (no caching).
  DegreeAnnotator(Lexicon lexicon, DegreeCache* cache, ChatClient* client, int max_retries = 2,
                  std::string request_template = std::string(assets::kDegreeRequestTemplate),
                  WarningSink warn = warn_to_stderr)
      : lexicon_(std::move(lexicon)),
        cache_(cache),
        client_(client),
        max_retries_(std::max(0, max_retries)),
        template_(std::move(request_template)),
        warn_(std::move(warn)) {}

  DegreeAnnotation annotate(const DegreeItem& item) {
    if (item.prompt.empty()) throw input_error("annotate_degree: empty prompt for item " + item.item_id);
    const std::string key = degree_cache_key(item.prompt, item.image_path);

    // One computation per key; concurrent callers with the same key wait for it.
    std::shared_ptr<Pending> pending;
    bool owner = false;
    {
      std::unique_lock lock(mu_);
      if (cache_)
        if (auto hit = cache_->find(key)) return relabel(*hit, item.item_id);
      auto& slot = in_flight_[key];
      if (!slot) {
        slot = std::make_shared<Pending>();
        owner = true;
      }
      pending = slot;
      if (!owner) {
        pending->cv.wait(lock, [&] { return pending->done; });
        return relabel(pending->result, item.item_id);
      }
    }

    DegreeAnnotation result = compute(item);
    if (cache_) cache_->append(key, result);
    {
      std::lock_guard lock(mu_);
      pending->result = result;
      pending->done = true;
      in_flight_.erase(key);
    }
    pending->cv.notify_all();
    return result;
  }

  std::vector<DegreeAnnotation> annotate_all(const std::vector<DegreeItem>& items, std::size_t max_in_flight) {
    return parallel_map(items, max_in_flight, [this](const DegreeItem& it) { return annotate(it); });
  }

 private:
  struct Pending {
    std::condition_variable cv;
    bool done = false;
    DegreeAnnotation result;
  };

  static DegreeAnnotation relabel(DegreeAnnotation a, const std::string& item_id) {
    a.item_id = item_id;
    return a;
  }

  DegreeAnnotation compute(const DegreeItem& item) {
    if (client_) {
      const std::string request = render_request(template_, item.prompt, item.image_path.string());
      std::string last_problem;
      for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        try {
          std::string reply = client_->complete(request);
          if (auto d = parse_degree_reply(reply)) return {item.item_id, *d, DegreeSource::Llm, std::move(reply)};
          last_problem = "unparseable reply";
        } catch (const std::exception& e) {
          last_problem = e.what();
        }
      }
      if (warn_) warn_("degree for " + item.item_id + ": " + last_problem + " after " +
                       std::to_string(max_retries_ + 1) + " attempt(s); using lexicon");
    }
    return {item.item_id, lexicon_.degree(item.prompt), DegreeSource::Lexicon, {}};
  }

  Lexicon lexicon_;
  DegreeCache* cache_;
  ChatClient* client_;
  int max_retries_;
  std::string template_;
  WarningSink warn_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Pending>> in_flight_;
};

}  // namespace dive
