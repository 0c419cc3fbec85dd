#include <doctest.h>

#include <set>

#include "crd/errors.hpp"
#include "crd/taxonomy.hpp"
#include "support.hpp"

using namespace crd;

namespace {

json doc() { return read_json_file(testsupport::data("taxonomy.json")); }

}  // namespace

TEST_CASE("shipped taxonomy has the fixed cardinalities") {
  const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  CHECK(t.categories().size() == 9);
  CHECK(t.fine_descriptors().size() == 30);
  CHECK(t.apple_descriptors().size() == 12);
}

TEST_CASE("substance use expands into six fine descriptors") {
  const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  const auto fines = expand_apple(t, "Alcohol, Tobacco, or Drug Use or References");
  CHECK(fines.size() == 6);
  for (const auto& f : fines) CHECK(f.primary_category == "substance");
  for (const auto& f : fines) CHECK(parent_apple(t, f.id)->id == "alcohol_tobacco_drugs");
}

TEST_CASE("exactly the gambling, web and contest descriptors lack severity") {
  const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  std::set<std::string> unsupported;
  for (const auto& a : t.apple_descriptors())
    if (!a.severity_supported) unsupported.insert(a.id);
  CHECK(unsupported == std::set<std::string>{"contests", "real_gambling", "unrestricted_web_access"});
  CHECK(t.apple("Simulated Gambling").severity_supported);
}

TEST_CASE("lookup by id or case-insensitive name") {
  const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  CHECK(t.apple("realistic violence").id == "realistic_violence");
  CHECK(t.apple("realistic_violence").name == "Realistic Violence");
  CHECK_THROWS_AS(t.apple("Unknown Thing"), NotFoundError);
  CHECK(t.find_fine("nope") == nullptr);
}

TEST_CASE("mapping is total on the Apple side and fine parents are unique") {
  const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  std::set<std::string> seen;
  for (const auto& a : t.apple_descriptors()) {
    CHECK_FALSE(expand_apple(t, a.id).empty());
    for (const auto& f : expand_apple(t, a.id)) CHECK(seen.insert(f.id).second);
  }
  std::size_t unmapped = 0;
  for (const auto& f : t.fine_descriptors()) unmapped += !parent_apple(t, f.id).has_value();
  CHECK(unmapped + seen.size() == 30);
}

TEST_CASE("definition lookup falls back across sources") {
  const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  CHECK(definition_of(t, "realistic_violence", DefinitionSource::esrb).source == DefinitionSource::esrb);
  CHECK(definition_of(t, "realistic_violence", DefinitionSource::apple).source == DefinitionSource::apple);
  // Only an ACB entry exists for this fine descriptor.
  CHECK(definition_of(t, "themes.horror_fear", DefinitionSource::apple).source == DefinitionSource::acb);
  CHECK_THROWS_AS(definition_of(t, "missing.descriptor", DefinitionSource::esrb), NotFoundError);
}

TEST_CASE("structural violations are rejected") {
  SUBCASE("missing category") {
    json d = doc();
    d["categories"].erase(d["categories"].size() - 1);
    CHECK_THROWS_AS(Taxonomy::from_json(d), ValidationError);
  }
  SUBCASE("fourth severity-less descriptor") {
    json d = doc();
    d["apple_descriptors"][0]["severity_supported"] = false;
    CHECK_THROWS_AS(Taxonomy::from_json(d), ValidationError);
  }
  SUBCASE("fine descriptor with two Apple parents") {
    json d = doc();
    d["mapping"]["horror_fear_themes"].push_back("substance.alcohol_use");
    CHECK_THROWS_AS(Taxonomy::from_json(d), ValidationError);
  }
  SUBCASE("dangling category reference") {
    json d = doc();
    d["fine_descriptors"][0]["primary_category"] = "nowhere";
    CHECK_THROWS_AS(Taxonomy::from_json(d), ValidationError);
  }
  SUBCASE("duplicate descriptor id") {
    json d = doc();
    d["fine_descriptors"][1]["id"] = d["fine_descriptors"][0]["id"];
    CHECK_THROWS_AS(Taxonomy::from_json(d), ValidationError);
  }
  SUBCASE("missing section") {
    json d = doc();
    d.erase("mapping");
    CHECK_THROWS_AS(Taxonomy::from_json(d), ParseError);
  }
}

TEST_CASE("loading is deterministic") {
  CHECK(load_taxonomy(testsupport::data("taxonomy.json")) == load_taxonomy(testsupport::data("taxonomy.json")));
}
