#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voxdistill/evolution.hpp"

namespace voxdistill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cell_stem(int cell) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", cell);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_archive(const std::string& dir, const EliteArchive& archive) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "cells", ec);
  if (ec) throw FormatError("cannot create archive directory '" + dir + "': " + ec.message());

  json manifest;
  manifest["format"] = "voxdistill-archive";
  manifest["version"] = kArchiveVersion;
  manifest["config_hash"] = archive.config_hash;
  manifest["seed"] = archive.seed;
  manifest["generation"] = archive.generation;
  manifest["migrations"] = archive.migrations;
  manifest["next_id"] = archive.next_id;
  manifest["occupancy"] = archive.occupancy();
  manifest["qd_score"] = archive.qd_score();
  json cells = json::array();
  for (const auto& [cell, ind] : archive.cells) {
    const std::string stem = cell_stem(cell);
    {
      std::ofstream grid(root / "cells" / (stem + ".grid"), std::ios::trunc);
      grid << format_grid(ind.grid);
      if (!grid) throw FormatError("failed writing grid for cell " + stem);
    }
    save_checkpoint((root / "cells" / (stem + ".ckpt")).string(), ind.controller, archive.config_hash);
    const Descriptor d = descriptor(ind.grid);
    cells.push_back({{"cell", cell},
                     {"n_voxels", d.n_voxels},
                     {"n_active", d.n_active},
                     {"fitness", ind.fitness},
                     {"age", ind.age},
                     {"id", ind.id},
                     {"parent_id", ind.parent_id},
                     {"grid", "cells/" + stem + ".grid"},
                     {"checkpoint", "cells/" + stem + ".ckpt"}});
  }
  manifest["cells"] = std::move(cells);
  {
    std::ofstream out(root / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw FormatError("failed writing manifest in '" + dir + "'");
  }

  std::ofstream log(root / "log.csv", std::ios::trunc);
  log << "generation,occupancy,best,qd_score,migrations,insertions\n";
  log.precision(17);
  for (const GenerationLog& g : archive.log) {
    log << g.generation << ',' << g.occupancy << ',' << g.best << ',' << g.qd_score << ',' << g.migrations << ','
        << g.insertions << '\n';
  }
  if (!log) throw FormatError("failed writing log in '" + dir + "'");
}

EliteArchive load_archive(const std::string& dir) {
  const fs::path root(dir);
  json manifest;
  try {
    manifest = json::parse(read_text(root / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError("malformed archive manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "voxdistill-archive") throw FormatError("not an archive manifest");
  const int version = manifest.value("version", -1);
  if (version != kArchiveVersion) {
    throw FormatError("archive version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kArchiveVersion) + ")");
  }

  EliteArchive archive;
  try {
    archive.config_hash = manifest.at("config_hash").get<std::uint64_t>();
    archive.seed = manifest.at("seed").get<std::uint64_t>();
    archive.generation = manifest.at("generation").get<int>();
    archive.migrations = manifest.at("migrations").get<std::uint64_t>();
    archive.next_id = manifest.at("next_id").get<std::uint64_t>();
    for (const json& c : manifest.at("cells")) {
      Individual ind;
      const int cell = c.at("cell").get<int>();
      ind.grid = parse_grid(read_text(root / c.at("grid").get<std::string>()));
      std::uint64_t hash = 0;
      ind.controller = load_checkpoint((root / c.at("checkpoint").get<std::string>()).string(), &hash);
      if (hash != archive.config_hash) {
        throw FormatError("checkpoint for cell " + std::to_string(cell) + " carries a different config hash");
      }
      ind.fitness = c.at("fitness").get<double>();
      ind.age = c.at("age").get<int>();
      ind.id = c.at("id").get<std::uint64_t>();
      ind.parent_id = c.at("parent_id").get<std::uint64_t>();
      if (!is_connected(ind.grid) || cell_index(descriptor(ind.grid)) != cell) {
        throw FormatError("cell " + std::to_string(cell) + " holds a body with a different descriptor");
      }
      archive.cells.emplace(cell, std::move(ind));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed archive manifest: " + std::string(e.what()));
  }

  std::ifstream log(root / "log.csv");
  std::string line;
  if (log && std::getline(log, line)) {
    while (std::getline(log, line)) {
      if (line.empty()) continue;
      GenerationLog g;
      char sep = 0;
      std::istringstream ss(line);
      ss >> g.generation >> sep >> g.occupancy >> sep >> g.best >> sep >> g.qd_score >> sep >> g.migrations >> sep >>
          g.insertions;
      if (!ss) throw FormatError("malformed archive log line: " + line);
      archive.log.push_back(g);
    }
  }
  return archive;
}

void save_teachers(const std::string& dir, const std::vector<Individual>& teachers, std::uint64_t config_hash) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw FormatError("cannot create directory '" + dir + "': " + ec.message());
  json list = json::array();
  for (std::size_t i = 0; i < teachers.size(); ++i) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "%03zu", i);
    {
      std::ofstream grid(root / (std::string(stem) + ".grid"), std::ios::trunc);
      grid << format_grid(teachers[i].grid);
      if (!grid) throw FormatError("failed writing teacher grid " + std::string(stem));
    }
    save_checkpoint((root / (std::string(stem) + ".ckpt")).string(), teachers[i].controller, config_hash);
    list.push_back({{"fitness", teachers[i].fitness},
                    {"id", teachers[i].id},
                    {"grid", std::string(stem) + ".grid"},
                    {"checkpoint", std::string(stem) + ".ckpt"}});
  }
  json manifest{{"format", "voxdistill-teachers"},
                {"version", kArchiveVersion},
                {"config_hash", config_hash},
                {"teachers", std::move(list)}};
  std::ofstream out(root / "teachers.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw FormatError("failed writing teachers.json in '" + dir + "'");
}

std::vector<Individual> load_teachers(const std::string& dir, std::uint64_t* config_hash) {
  const fs::path root(dir);
  std::vector<Individual> out;
  try {
    const json manifest = json::parse(read_text(root / "teachers.json"));
    if (manifest.value("format", "") != "voxdistill-teachers") throw FormatError("not a teacher list");
    if (manifest.value("version", -1) != kArchiveVersion) throw FormatError("unsupported teacher list version");
    const auto hash = manifest.at("config_hash").get<std::uint64_t>();
    if (config_hash != nullptr) *config_hash = hash;
    for (const json& t : manifest.at("teachers")) {
      Individual ind;
      ind.grid = parse_grid(read_text(root / t.at("grid").get<std::string>()));
      ind.controller = load_checkpoint((root / t.at("checkpoint").get<std::string>()).string());
      ind.fitness = t.at("fitness").get<double>();
      ind.id = t.at("id").get<std::uint64_t>();
      out.push_back(std::move(ind));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed teacher list: " + std::string(e.what()));
  }
  return out;
}

}  // namespace voxdistill
