#include "deepcat/corpus_io.hpp"

#include <algorithm>
#include <json.hpp>

#include <fstream>
#include <sstream>

namespace deepcat {

using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

json parse_line(const std::filesystem::path& path, const std::string& line, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

void check_header(const std::filesystem::path& path, const json& header, const char* format, int version) {
  if (!header.is_object() || header.value("format", "") != format) {
    throw DataError(path.string() + ": not a " + format + " file");
  }
  if (header.value("version", -1) != version) {
    throw DataError(path.string() + ": unsupported " + format + " version " + header.value("version", json(-1)).dump());
  }
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out << contents;
    if (!out) {
      std::filesystem::remove(tmp);
      throw DataError("write failed for '" + tmp + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_corpus(const std::filesystem::path& path, const std::vector<QueryRecord>& records) {
  std::ostringstream os;
  os << json{{"format", "deepcat.corpus"}, {"version", kCorpusFormatVersion}, {"count", records.size()}}.dump()
     << '\n';
  for (const auto& r : records) {
    os << json{{"raw_text", r.raw_text}, {"categories", r.categories}, {"frequency", r.frequency}}.dump() << '\n';
  }
  write_file_atomic(path, os.str());
}

std::vector<QueryRecord> read_corpus(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  const json header = parse_line(path, lines[0], 1);
  check_header(path, header, "deepcat.corpus", kCorpusFormatVersion);
  std::vector<QueryRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json j = parse_line(path, lines[i], i + 1);
    try {
      QueryRecord r;
      r.raw_text = j.at("raw_text").get<std::string>();
      r.categories = j.at("categories").get<std::vector<int>>();
      r.frequency = j.at("frequency").get<std::int64_t>();
      std::sort(r.categories.begin(), r.categories.end());
      r.categories.erase(std::unique(r.categories.begin(), r.categories.end()), r.categories.end());
      if (r.categories.empty()) throw DataError("empty category set");
      r.bucket = assign_bucket(r.frequency);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (header.contains("count") && header["count"].get<std::size_t>() != out.size()) {
    throw DataError(path.string() + ": header count does not match record count (truncated file?)");
  }
  return out;
}

void write_taxonomy(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  taxonomy.validate();
  std::ostringstream os;
  os << json{{"format", "deepcat.taxonomy"},
             {"version", kTaxonomyFormatVersion},
             {"num_l1", taxonomy.num_l1()},
             {"num_leaves", taxonomy.num_leaves()}}
            .dump()
     << '\n';
  for (int i = 0; i < taxonomy.num_l1(); ++i)
    os << json{{"kind", "l1"}, {"id", i}, {"name", taxonomy.l1_names[static_cast<std::size_t>(i)]}}.dump() << '\n';
  for (int i = 0; i < taxonomy.num_leaves(); ++i) {
    os << json{{"kind", "leaf"},
               {"id", i},
               {"name", taxonomy.leaf_names[static_cast<std::size_t>(i)]},
               {"parent", taxonomy.parent[static_cast<std::size_t>(i)]}}
              .dump()
       << '\n';
  }
  write_file_atomic(path, os.str());
}

Taxonomy read_taxonomy(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  const json header = parse_line(path, lines[0], 1);
  check_header(path, header, "deepcat.taxonomy", kTaxonomyFormatVersion);
  Taxonomy t;
  const auto n_l1 = header.at("num_l1").get<std::size_t>();
  const auto n_leaf = header.at("num_leaves").get<std::size_t>();
  t.l1_names.resize(n_l1);
  t.leaf_names.resize(n_leaf);
  t.parent.assign(n_leaf, -1);
  std::size_t seen = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json j = parse_line(path, lines[i], i + 1);
    try {
      const auto kind = j.at("kind").get<std::string>();
      const auto id = j.at("id").get<std::size_t>();
      if (kind == "l1" && id < n_l1) {
        t.l1_names[id] = j.at("name").get<std::string>();
      } else if (kind == "leaf" && id < n_leaf) {
        t.leaf_names[id] = j.at("name").get<std::string>();
        t.parent[id] = j.at("parent").get<int>();
      } else {
        throw DataError("bad node kind or id");
      }
      ++seen;
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (seen != n_l1 + n_leaf) throw DataError(path.string() + ": node count does not match header");
  t.validate();
  return t;
}

}  // namespace deepcat
