#pragma once

// HTTP front end for a ranking study: assignments, response intake, live
// results and blinded media URLs.

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "dive/detail/httplib.hpp"
#include "dive/human_study.hpp"
#include "dive/sha256.hpp"

namespace dive {

struct StudyReply {
  int status = 200;
  nlohmann::json body;
};

inline StudyReply study_error(int status, const std::string& reason) { return {status, {{"error", reason}}}; }

/// Opaque per (study, model, item) path segment so media URLs do not reveal the model.
inline std::string media_token(const std::string& study_id, const std::string& model, const std::string& item) {
  return Sha256().update(study_id + "\n" + model + "\n" + item).hex().substr(0, 16);
}

/// Request handling independent of the transport. Store appends go through one mutex.
class StudyService {
 public:
  explicit StudyService(StudyConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    for (const auto& r : load_store(cfg_.store_path(), cfg_)) note(r);
    for (const auto& m : cfg_.models)
      for (const auto& [item, path] : m.media) media_[{item, media_token(cfg_.study_id, m.id, item)}] = path;
  }

  const StudyConfig& config() const { return cfg_; }

  /// Item with the fewest answers that this volunteer has not finished; ties go to the smaller item_id.
  StudyReply assignment(const std::string& study_id, const std::string& volunteer) const {
    if (study_id != cfg_.study_id) return study_error(404, "unknown study '" + study_id + "'");
    if (volunteer.empty()) return study_error(400, "missing volunteer query parameter");
    std::lock_guard lock(mutex_);
    const std::string* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& item : cfg_.items) {
      if (pending_dimensions(volunteer, item).empty()) continue;
      const auto it = answers_per_item_.find(item);
      const std::size_t count = it == answers_per_item_.end() ? 0 : it->second;
      if (!best || count < best_count || (count == best_count && item < *best)) {
        best = &item;
        best_count = count;
      }
    }
    if (!best) return {200, {{"done", true}, {"item_id", nullptr}, {"dimension_list", nlohmann::json::array()}}};
    nlohmann::json dims = nlohmann::json::array();
    for (auto d : pending_dimensions(volunteer, *best)) dims.push_back(to_string(d));
    nlohmann::json media = nlohmann::json::object();
    for (const auto& m : cfg_.models)
      if (m.media.count(*best))
        media[m.id] = "/media/" + cfg_.study_id + "/" + *best + "/" + media_token(cfg_.study_id, m.id, *best);
    return {200, {{"done", false}, {"item_id", *best}, {"dimension_list", dims}, {"media", media}}};
  }

  StudyReply submit(const std::string& study_id, const std::string& body) {
    if (study_id != cfg_.study_id) return study_error(404, "unknown study '" + study_id + "'");
    RankingRecord r;
    try {
      r = ranking_record_from_json(nlohmann::json::parse(body));
      validate_record(r, cfg_);
    } catch (const nlohmann::json::exception& e) {
      return study_error(400, std::string("malformed body: ") + e.what());
    } catch (const Error& e) {
      return study_error(400, e.what());
    }
    if (r.timestamp.empty()) r.timestamp = utc_timestamp();
    std::lock_guard lock(mutex_);
    if (answered_.count(response_key(r)))
      return study_error(409, "duplicate response from " + r.volunteer_id + " for " + r.item_id + "/" +
                                  to_string(r.dimension));
    if (answers_per_cell_[{r.item_id, r.dimension}] >= static_cast<std::size_t>(cfg_.n_volunteers_expected))
      return study_error(409, "all expected volunteers already answered " + r.item_id + "/" + to_string(r.dimension));
    try {
      append_store(cfg_.store_path(), r);
    } catch (const Error& e) {
      return study_error(500, e.what());
    }
    note(r);
    return {201, {{"stored", true}, {"record", to_json(r)}}};
  }

  /// Aggregate of a fresh whole-file read of the store.
  StudyReply results(const std::string& study_id) const {
    if (study_id != cfg_.study_id) return study_error(404, "unknown study '" + study_id + "'");
    std::lock_guard lock(mutex_);
    try {
      return {200, to_json(aggregate_study(load_store(cfg_.store_path(), cfg_), cfg_))};
    } catch (const Error& e) {
      return study_error(500, e.what());
    }
  }

  std::optional<std::filesystem::path> media_file(const std::string& study_id, const std::string& item,
                                                  const std::string& token) const {
    if (study_id != cfg_.study_id) return std::nullopt;
    const auto it = media_.find({item, token});
    if (it == media_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<StudyDimension> pending_dimensions(const std::string& volunteer, const std::string& item) const {
    std::vector<StudyDimension> out;
    for (auto d : cfg_.dimensions)
      if (!answered_.count({volunteer, item, d})) out.push_back(d);
    return out;
  }

  void note(const RankingRecord& r) {
    answered_.insert(response_key(r));
    ++answers_per_item_[r.item_id];
    ++answers_per_cell_[{r.item_id, r.dimension}];
  }

  StudyConfig cfg_;
  mutable std::mutex mutex_;
  std::set<ResponseKey> answered_;
  std::map<std::string, std::size_t> answers_per_item_;
  std::map<std::pair<std::string, StudyDimension>, std::size_t> answers_per_cell_;
  std::map<std::pair<std::string, std::string>, std::filesystem::path> media_;
};

inline const char* media_content_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".mp4") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".gif") return "image/gif";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "application/octet-stream";
}

/// Registers the study routes on `server`. `service` must outlive it.
inline void mount_study(httplib::Server& server, StudyService& service) {
  auto send = [](httplib::Response& res, const StudyReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  server.Get(R"(/api/study/([^/]+)/assignment)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.assignment(req.matches[1], req.get_param_value("volunteer")));
  });
  server.Post(R"(/api/study/([^/]+)/response)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.submit(req.matches[1], req.body));
  });
  server.Get(R"(/api/study/([^/]+)/results)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.results(req.matches[1]));
  });
  server.Get(R"(/media/([^/]+)/([^/]+)/([0-9a-f]+))", [&service, send](const httplib::Request& req,
                                                                       httplib::Response& res) {
    const auto path = service.media_file(req.matches[1], req.matches[2], req.matches[3]);
    if (!path) return send(res, study_error(404, "no such media"));
    try {
      res.set_content(detail::read_text_file(*path), media_content_type(*path));
    } catch (const Error& e) {
      send(res, study_error(500, e.what()));
    }
  });
}

}  // namespace dive
