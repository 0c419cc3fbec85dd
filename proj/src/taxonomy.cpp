#include "crd/taxonomy.hpp"

#include <algorithm>
#include <set>

#include "crd/errors.hpp"

namespace crd {

namespace {

std::string require_string(const json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw ParseError(std::string(where) + ": missing string field '" + key + "'");
  return it->get<std::string>();
}

const json& require_array(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array())
    throw ParseError(std::string("taxonomy: missing list section '") + key + "'");
  return *it;
}

}  // namespace

std::string_view to_string(DefinitionSource source) {
  switch (source) {
    case DefinitionSource::esrb: return "ESRB";
    case DefinitionSource::acb: return "ACB";
    case DefinitionSource::apple: return "Apple";
  }
  return "Apple";
}

DefinitionSource parse_definition_source(std::string_view text) {
  const std::string lower = to_lower_ascii(text);
  if (lower == "esrb") return DefinitionSource::esrb;
  if (lower == "acb") return DefinitionSource::acb;
  if (lower == "apple") return DefinitionSource::apple;
  throw ParseError("unknown definition source '" + std::string(text) + "'");
}

Taxonomy Taxonomy::from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("taxonomy: top level must be an object");
  Taxonomy t;

  for (const auto& c : require_array(doc, "categories"))
    t.categories_.push_back({require_string(c, "id", "category"), require_string(c, "name", "category")});

  for (const auto& f : require_array(doc, "fine_descriptors")) {
    FineDescriptor fd{require_string(f, "id", "fine descriptor"), require_string(f, "name", "fine descriptor"),
                      require_string(f, "primary_category", "fine descriptor"), ""};
    fd.definition_ref = f.contains("definition_ref") ? require_string(f, "definition_ref", "fine descriptor") : fd.id;
    t.fine_.push_back(std::move(fd));
  }

  for (const auto& a : require_array(doc, "apple_descriptors")) {
    AppleDescriptor ad{require_string(a, "id", "apple descriptor"), require_string(a, "name", "apple descriptor"), true};
    if (auto it = a.find("severity_supported"); it != a.end()) {
      if (!it->is_boolean()) throw ParseError("apple descriptor " + ad.id + ": severity_supported must be boolean");
      ad.severity_supported = it->get<bool>();
    }
    t.apple_.push_back(std::move(ad));
  }

  auto mapping = doc.find("mapping");
  if (mapping == doc.end() || !mapping->is_object()) throw ParseError("taxonomy: missing object section 'mapping'");
  for (const auto& [apple_id, fines] : mapping->items()) {
    if (!fines.is_array()) throw ParseError("mapping for " + apple_id + " must be a list");
    auto& dst = t.apple_to_fine_[apple_id];
    for (const auto& f : fines) dst.push_back(f.get<std::string>());
  }

  for (const auto& d : require_array(doc, "definitions")) {
    t.definitions_.push_back({require_string(d, "descriptor_id", "definition"),
                              parse_definition_source(require_string(d, "source", "definition")),
                              require_string(d, "text", "definition")});
  }

  // Cardinalities.
  if (t.categories_.size() != kPrimaryCategoryCount)
    throw ValidationError("taxonomy: expected 9 primary categories, found " + std::to_string(t.categories_.size()));
  if (t.fine_.size() != kFineDescriptorCount)
    throw ValidationError("taxonomy: expected 30 fine descriptors, found " + std::to_string(t.fine_.size()));
  if (t.apple_.size() != kAppleDescriptorCount)
    throw ValidationError("taxonomy: expected 12 Apple descriptors, found " + std::to_string(t.apple_.size()));
  const auto unsupported = std::count_if(t.apple_.begin(), t.apple_.end(),
                                         [](const AppleDescriptor& a) { return !a.severity_supported; });
  if (static_cast<std::size_t>(unsupported) != kSeverityUnsupportedCount)
    throw ValidationError("taxonomy: expected exactly 3 Apple descriptors without severity levels, found " +
                          std::to_string(unsupported));

  // Id uniqueness (fine and Apple ids share the definition namespace).
  std::set<std::string> ids;
  for (const auto& c : t.categories_)
    if (!ids.insert("category:" + c.id).second) throw ValidationError("taxonomy: duplicate category id " + c.id);
  std::set<std::string> descriptor_ids;
  for (const auto& f : t.fine_)
    if (!descriptor_ids.insert(f.id).second) throw ValidationError("taxonomy: duplicate descriptor id " + f.id);
  for (const auto& a : t.apple_)
    if (!descriptor_ids.insert(a.id).second) throw ValidationError("taxonomy: duplicate descriptor id " + a.id);

  // Category references and fan-out.
  for (const auto& f : t.fine_) {
    const bool known = std::any_of(t.categories_.begin(), t.categories_.end(),
                                   [&](const PrimaryCategory& c) { return c.id == f.primary_category; });
    if (!known)
      throw ValidationError("taxonomy: fine descriptor " + f.id + " references unknown category " + f.primary_category);
  }
  for (const auto& c : t.categories_) {
    const auto n = t.children_of(c.id).size();
    if (n < 2 || n > 6)
      throw ValidationError("taxonomy: category " + c.id + " has " + std::to_string(n) + " children (expected 2-6)");
  }

  // Mapping: total on the Apple side, each fine descriptor under at most one parent.
  std::set<std::string> mapped;
  for (const auto& [apple_id, fines] : t.apple_to_fine_) {
    if (!t.find_apple(apple_id) || t.find_apple(apple_id)->id != apple_id)
      throw ValidationError("taxonomy: mapping references unknown Apple descriptor " + apple_id);
    for (const auto& f : fines) {
      if (!t.find_fine(f)) throw ValidationError("taxonomy: mapping for " + apple_id + " references unknown fine descriptor " + f);
      if (!mapped.insert(f).second) throw ValidationError("taxonomy: fine descriptor " + f + " has more than one Apple parent");
    }
  }
  for (const auto& a : t.apple_) {
    auto it = t.apple_to_fine_.find(a.id);
    if (it == t.apple_to_fine_.end() || it->second.empty())
      throw ValidationError("taxonomy: Apple descriptor " + a.id + " maps to no fine descriptor");
  }

  // Definitions.
  std::set<std::string> defined;
  for (const auto& d : t.definitions_) {
    if (!descriptor_ids.count(d.descriptor_id))
      throw ValidationError("taxonomy: definition references unknown descriptor " + d.descriptor_id);
    defined.insert(d.descriptor_id);
  }
  for (const auto& f : t.fine_) {
    if (!descriptor_ids.count(f.definition_ref))
      throw ValidationError("taxonomy: fine descriptor " + f.id + " has dangling definition_ref " + f.definition_ref);
    if (!defined.count(f.definition_ref))
      throw ValidationError("taxonomy: fine descriptor " + f.id + " has no definition");
  }
  for (const auto& a : t.apple_)
    if (!defined.count(a.id)) throw ValidationError("taxonomy: Apple descriptor " + a.id + " has no definition");

  return t;
}

const AppleDescriptor* Taxonomy::find_apple(std::string_view id_or_name) const {
  for (const auto& a : apple_)
    if (a.id == id_or_name) return &a;
  const std::string lower = to_lower_ascii(id_or_name);
  for (const auto& a : apple_)
    if (to_lower_ascii(a.name) == lower) return &a;
  return nullptr;
}

const AppleDescriptor& Taxonomy::apple(std::string_view id_or_name) const {
  if (const auto* a = find_apple(id_or_name)) return *a;
  throw NotFoundError("unknown Apple descriptor '" + std::string(id_or_name) + "'");
}

const FineDescriptor* Taxonomy::find_fine(std::string_view id) const {
  for (const auto& f : fine_)
    if (f.id == id) return &f;
  return nullptr;
}

const FineDescriptor& Taxonomy::fine(std::string_view id) const {
  if (const auto* f = find_fine(id)) return *f;
  throw NotFoundError("unknown fine descriptor '" + std::string(id) + "'");
}

std::vector<const FineDescriptor*> Taxonomy::children_of(std::string_view category_id) const {
  std::vector<const FineDescriptor*> out;
  for (const auto& f : fine_)
    if (f.primary_category == category_id) out.push_back(&f);
  return out;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  return Taxonomy::from_json(read_json_file(path));
}

std::vector<FineDescriptor> expand_apple(const Taxonomy& taxonomy, std::string_view apple_id) {
  const auto& apple = taxonomy.apple(apple_id);
  std::vector<FineDescriptor> out;
  for (const auto& id : taxonomy.apple_to_fine().at(apple.id)) out.push_back(taxonomy.fine(id));
  return out;
}

std::optional<AppleDescriptor> parent_apple(const Taxonomy& taxonomy, std::string_view fine_id) {
  const auto& fine = taxonomy.fine(fine_id);
  for (const auto& [apple_id, fines] : taxonomy.apple_to_fine())
    if (std::find(fines.begin(), fines.end(), fine.id) != fines.end()) return taxonomy.apple(apple_id);
  return std::nullopt;
}

DescriptorDefinition definition_of(const Taxonomy& taxonomy, std::string_view descriptor_id,
                                   DefinitionSource preferred) {
  std::string key(descriptor_id);
  if (const auto* f = taxonomy.find_fine(descriptor_id)) {
    key = f->definition_ref;
  } else if (const auto* a = taxonomy.find_apple(descriptor_id)) {
    key = a->id;
  } else {
    throw NotFoundError("unknown descriptor '" + key + "'");
  }
  auto lookup = [&](DefinitionSource source) -> const DescriptorDefinition* {
    for (const auto& d : taxonomy.definitions())
      if (d.descriptor_id == key && d.source == source) return &d;
    return nullptr;
  };
  if (const auto* d = lookup(preferred)) return *d;
  for (auto source : {DefinitionSource::esrb, DefinitionSource::acb, DefinitionSource::apple})
    if (const auto* d = lookup(source)) return *d;
  // Unreachable for a validated taxonomy.
  throw ValidationError("descriptor '" + key + "' has no definition");
}

}  // namespace crd
