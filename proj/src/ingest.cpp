#include "crd/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "crd/errors.hpp"

namespace crd {

namespace {

constexpr std::array<std::string_view, 26> kGenres{
    "Books",         "Business",      "Developer Tools",        "Education",     "Entertainment",
    "Finance",       "Food & Drink",  "Games",                  "Graphics & Design", "Health & Fitness",
    "Lifestyle",     "Kids",          "Magazines & Newspapers", "Medical",       "Music",
    "Navigation",    "News",          "Photo & Video",          "Productivity",  "Reference",
    "Shopping",      "Social Networking", "Sports",             "Travel",        "Utilities",
    "Weather"};

std::string field_string(const json& r, const char* key, const std::string& app) {
  auto it = r.find(key);
  if (it == r.end() || it->is_null()) throw ValidationError("app " + app + ": missing required field '" + key + "'");
  if (!it->is_string()) throw ValidationError("app " + app + ": field '" + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::none: return "none";
    case Severity::mild: return "mild";
    case Severity::strong: return "strong";
  }
  return "none";
}

Severity parse_severity(std::string_view text) {
  const std::string s = to_lower_ascii(trim(text));
  if (s == "none" || s.empty()) return Severity::none;
  if (s == "mild" || s == "mild/infrequent" || s == "infrequent") return Severity::mild;
  if (s == "strong" || s == "intense/frequent" || s == "frequent" || s == "intense") return Severity::strong;
  throw ParseError("unknown severity '" + std::string(text) + "'");
}

std::string_view to_string(RatingClass rating) {
  switch (rating) {
    case RatingClass::r4: return "4+";
    case RatingClass::r9: return "9+";
    case RatingClass::r12: return "12+";
    case RatingClass::r17: return "17+";
  }
  return "4+";
}

RatingClass parse_rating(std::string_view text) {
  const std::string s = trim(text);
  if (s == "4+") return RatingClass::r4;
  if (s == "9+") return RatingClass::r9;
  if (s == "12+") return RatingClass::r12;
  if (s == "17+") return RatingClass::r17;
  throw ValidationError("unknown rating class '" + s + "'");
}

const std::array<std::string_view, 26>& app_store_genres() { return kGenres; }

const DeclaredDescriptor* AppRecord::declared(std::string_view descriptor_id) const {
  for (const auto& d : declared_descriptors)
    if (d.descriptor == descriptor_id) return &d;
  return nullptr;
}

std::string AppRecord::description() const {
  if (description_long.empty()) return description_short;
  if (description_short.empty()) return description_long;
  return description_short + "\n\n" + description_long;
}

AppRecord parse_app_record(const json& r, const Taxonomy& taxonomy) {
  if (!r.is_object()) throw ParseError("app record must be an object");
  AppRecord app;
  app.app_id = field_string(r, "app_id", "?");
  if (app.app_id.empty()) throw ValidationError("app record has an empty app_id");
  const std::string& id = app.app_id;
  app.name = field_string(r, "name", id);
  app.genre = field_string(r, "genre", id);
  if (std::find(kGenres.begin(), kGenres.end(), app.genre) == kGenres.end())
    throw ValidationError("app " + id + ": unknown genre '" + app.genre + "'");
  app.description_short = field_string(r, "description_short", id);
  app.description_long = field_string(r, "description_long", id);
  app.icon_ref = r.value("icon_ref", std::string());
  app.declared_rating = parse_rating(field_string(r, "declared_rating", id));

  auto shots = r.find("screenshot_refs");
  if (shots == r.end() || !shots->is_array()) throw ValidationError("app " + id + ": missing required field 'screenshot_refs'");
  for (const auto& s : *shots) app.screenshot_refs.push_back(s.get<std::string>());

  auto decl = r.find("declared_descriptors");
  if (decl == r.end() || !decl->is_array())
    throw ValidationError("app " + id + ": missing required field 'declared_descriptors'");
  for (const auto& d : *decl) {
    std::string name;
    std::string severity_text;
    if (d.is_string()) {
      name = d.get<std::string>();
    } else if (d.is_array() && !d.empty()) {
      name = d.at(0).get<std::string>();
      if (d.size() > 1) severity_text = d.at(1).get<std::string>();
    } else if (d.is_object()) {
      name = d.value("descriptor", std::string());
      severity_text = d.value("severity", std::string());
    } else {
      throw ValidationError("app " + id + ": malformed declared descriptor entry");
    }
    const auto* apple = taxonomy.find_apple(name);
    if (!apple) throw ValidationError("app " + id + ": unknown descriptor '" + name + "'");
    if (app.declared(apple->id)) throw ValidationError("app " + id + ": duplicate descriptor '" + apple->name + "'");
    Severity severity = Severity::none;
    if (apple->severity_supported) {
      severity = parse_severity(severity_text);
      if (severity == Severity::none)
        throw ValidationError("app " + id + ": descriptor '" + apple->name + "' needs a mild or strong severity");
    }
    app.declared_descriptors.push_back({apple->id, severity});
  }

  auto num = [&](const char* key) -> const json& {
    auto it = r.find(key);
    if (it == r.end() || !it->is_number()) throw ValidationError("app " + id + ": missing numeric field '" + key + "'");
    return *it;
  };
  const json& rc = num("rating_count");
  if (rc.is_number_integer() && rc.get<std::int64_t>() < 0)
    throw ValidationError("app " + id + ": negative rating_count");
  if (!rc.is_number_integer() && !rc.is_number_unsigned()) throw ValidationError("app " + id + ": rating_count must be an integer");
  app.rating_count = rc.get<std::uint64_t>();
  app.avg_stars = num("avg_stars").get<double>();
  if (!(app.avg_stars >= 0.0 && app.avg_stars <= 5.0)) throw ValidationError("app " + id + ": avg_stars outside [0,5]");
  const json& rank = num("popularity_rank");
  if (!rank.is_number_integer() || rank.get<std::int64_t>() < 1)
    throw ValidationError("app " + id + ": popularity_rank must be a positive integer");
  app.popularity_rank = rank.get<std::uint64_t>();
  return app;
}

AppRecord parse_app_record(std::string_view line, const Taxonomy& taxonomy) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("app record: ") + e.what());
  }
  return parse_app_record(j, taxonomy);
}

json to_json(const AppRecord& app, const Taxonomy& taxonomy) {
  json decl = json::array();
  for (const auto& d : app.declared_descriptors) {
    json e{{"descriptor", taxonomy.apple(d.descriptor).name}};
    if (d.severity != Severity::none) e["severity"] = to_string(d.severity);
    decl.push_back(std::move(e));
  }
  return {{"app_id", app.app_id},
          {"name", app.name},
          {"genre", app.genre},
          {"description_short", app.description_short},
          {"description_long", app.description_long},
          {"screenshot_refs", app.screenshot_refs},
          {"icon_ref", app.icon_ref},
          {"declared_rating", to_string(app.declared_rating)},
          {"declared_descriptors", std::move(decl)},
          {"rating_count", app.rating_count},
          {"avg_stars", app.avg_stars},
          {"popularity_rank", app.popularity_rank}};
}

std::vector<AppRecord> load_corpus(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::vector<AppRecord> out;
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& j : read_jsonl(path)) {
    ++index;
    try {
      out.push_back(parse_app_record(j, taxonomy));
    } catch (const Error& e) {
      throw ValidationError(path.string() + " record " + std::to_string(index) + ": " + e.what());
    }
    if (!seen.insert(out.back().app_id).second)
      throw ValidationError(path.string() + ": duplicate app_id " + out.back().app_id);
  }
  return out;
}

std::string_view to_string(Criterion criterion) {
  switch (criterion) {
    case Criterion::rating_count: return "rating_count";
    case Criterion::avg_stars: return "avg_stars";
    case Criterion::popularity_rank: return "popularity_rank";
  }
  return "rating_count";
}

std::set<std::string> CorpusSelection::app_ids() const {
  std::set<std::string> out;
  for (const auto& c : cells)
    for (const auto& a : c.apps) out.insert(a.app_id);
  return out;
}

CorpusSelection curate_corpus(std::span<const AppRecord> records, std::size_t k_per_criterion,
                              std::span<const RatingClass> rating_classes, std::span<const std::string> genres) {
  if (k_per_criterion < 1) throw PreconditionError("curate_corpus: k_per_criterion must be >= 1");

  std::set<RatingClass> ratings(rating_classes.begin(), rating_classes.end());
  std::set<std::string> wanted_genres(genres.begin(), genres.end());
  if (ratings.empty())
    for (const auto& r : records) ratings.insert(r.declared_rating);
  if (wanted_genres.empty())
    for (const auto& r : records) wanted_genres.insert(r.genre);

  using Cmp = bool (*)(const AppRecord*, const AppRecord*);
  const std::array<std::pair<Criterion, Cmp>, 3> rankings{{
      {Criterion::rating_count,
       [](const AppRecord* a, const AppRecord* b) {
         return a->rating_count != b->rating_count ? a->rating_count > b->rating_count : a->app_id < b->app_id;
       }},
      {Criterion::avg_stars,
       [](const AppRecord* a, const AppRecord* b) {
         return a->avg_stars != b->avg_stars ? a->avg_stars > b->avg_stars : a->app_id < b->app_id;
       }},
      {Criterion::popularity_rank,
       [](const AppRecord* a, const AppRecord* b) {
         return a->popularity_rank != b->popularity_rank ? a->popularity_rank < b->popularity_rank
                                                         : a->app_id < b->app_id;
       }},
  }};

  CorpusSelection selection;
  for (RatingClass rating : ratings) {
    for (const auto& genre : wanted_genres) {
      std::vector<const AppRecord*> cell;
      for (const auto& r : records)
        if (r.declared_rating == rating && r.genre == genre) cell.push_back(&r);
      if (cell.empty()) continue;

      std::map<std::string, std::vector<Criterion>> chosen;
      for (const auto& [criterion, cmp] : rankings) {
        std::sort(cell.begin(), cell.end(), cmp);
        const std::size_t n = std::min(k_per_criterion, cell.size());
        for (std::size_t i = 0; i < n; ++i) chosen[cell[i]->app_id].push_back(criterion);
      }
      CorpusCell out{rating, genre, {}};
      for (auto& [id, criteria] : chosen) out.apps.push_back({id, std::move(criteria)});
      selection.cells.push_back(std::move(out));
    }
  }
  return selection;
}

json to_json(const GenerationTask& t) {
  return {{"app_id", t.app_id},
          {"app_name", t.app_name},
          {"description", t.description},
          {"screenshot_ref", t.screenshot_ref},
          {"screenshot_index", t.screenshot_index},
          {"target_descriptor", t.target_descriptor},
          {"descriptor_name", t.descriptor_name},
          {"severity_supported", t.severity_supported},
          {"expected_present", t.expected_present},
          {"expected_severity", to_string(t.expected_severity)},
          {"definition", t.definition}};
}

GenerationTask task_from_json(const json& j) {
  try {
    GenerationTask t;
    t.app_id = j.at("app_id").get<std::string>();
    t.app_name = j.at("app_name").get<std::string>();
    t.description = j.at("description").get<std::string>();
    t.screenshot_ref = j.at("screenshot_ref").get<std::string>();
    t.screenshot_index = j.at("screenshot_index").get<std::size_t>();
    t.target_descriptor = j.at("target_descriptor").get<std::string>();
    t.descriptor_name = j.at("descriptor_name").get<std::string>();
    t.severity_supported = j.at("severity_supported").get<bool>();
    t.expected_present = j.at("expected_present").get<bool>();
    t.expected_severity = parse_severity(j.at("expected_severity").get<std::string>());
    t.definition = j.at("definition").get<std::string>();
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("generation task: ") + e.what());
  }
}

std::string definition_bundle(const Taxonomy& taxonomy, std::string_view apple_id) {
  const auto& apple = taxonomy.apple(apple_id);
  std::string out = apple.name + ": " + definition_of(taxonomy, apple.id, DefinitionSource::apple).text;
  const auto children = expand_apple(taxonomy, apple.id);
  if (!children.empty()) {
    out += "\nCovers:";
    for (const auto& f : children)
      out += "\n- " + f.name + ": " + definition_of(taxonomy, f.id, DefinitionSource::esrb).text;
  }
  return out;
}

std::vector<GenerationTask> enumerate_tasks(const AppRecord& app, const Taxonomy& taxonomy, double negative_ratio,
                                            std::uint64_t seed, std::size_t max_screenshots) {
  if (!(negative_ratio >= 0.0)) throw ValidationError("enumerate_tasks: negative_ratio must be >= 0");
  if (app.screenshot_refs.empty()) throw PreconditionError("enumerate_tasks: app " + app.app_id + " has no screenshots");

  std::vector<std::string> positives;
  std::vector<std::string> undeclared;
  for (const auto& a : taxonomy.apple_descriptors())
    (app.declared(a.id) ? positives : undeclared).push_back(a.id);

  std::size_t n_neg = 1;
  if (!positives.empty()) {
    // Tolerance keeps e.g. 0.7 * 10 from rounding up to 8.
    n_neg = static_cast<std::size_t>(std::ceil(negative_ratio * static_cast<double>(positives.size()) - 1e-9));
  }
  n_neg = std::min(n_neg, undeclared.size());

  const std::size_t n_shots =
      max_screenshots == 0 ? app.screenshot_refs.size() : std::min(max_screenshots, app.screenshot_refs.size());

  std::mt19937_64 rng(mix_seed(seed, app.app_id));
  std::vector<GenerationTask> tasks;
  for (std::size_t s = 0; s < n_shots; ++s) {
    std::vector<std::string> chosen = positives;
    // Partial Fisher-Yates over the undeclared pool.
    std::vector<std::string> pool = undeclared;
    for (std::size_t i = 0; i < n_neg; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
      chosen.push_back(pool[i]);
    }
    std::sort(chosen.begin(), chosen.end());
    for (const auto& descriptor : chosen) {
      const auto& apple = taxonomy.apple(descriptor);
      const auto* declared = app.declared(descriptor);
      GenerationTask t;
      t.app_id = app.app_id;
      t.app_name = app.name;
      t.description = app.description();
      t.screenshot_ref = app.screenshot_refs[s];
      t.screenshot_index = s;
      t.target_descriptor = apple.id;
      t.descriptor_name = apple.name;
      t.severity_supported = apple.severity_supported;
      t.expected_present = declared != nullptr;
      t.expected_severity = declared ? declared->severity : Severity::none;
      t.definition = definition_bundle(taxonomy, apple.id);
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

}  // namespace crd
