#include "voxdistill/morphology.hpp"

#include <algorithm>
#include <sstream>

namespace voxdistill {

std::size_t MorphologyGridHash::operator()(const MorphologyGrid& g) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Material m : g.cells) {
    h ^= static_cast<std::uint64_t>(m);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

bool is_connected(const MorphologyGrid& grid) {
  int first = -1;
  int total = 0;
  for (int s = 0; s < kSlots; ++s) {
    if (grid.occupied(s)) {
      if (first < 0) first = s;
      ++total;
    }
  }
  if (first < 0) return false;

  std::array<bool, kSlots> seen{};
  std::array<int, kSlots> stack{};
  int top = 0;
  stack[top++] = first;
  seen[static_cast<std::size_t>(first)] = true;
  int reached = 0;
  while (top > 0) {
    const int s = stack[--top];
    ++reached;
    const int r = s / kGridW;
    const int c = s % kGridW;
    constexpr int dr[4] = {-1, 1, 0, 0};
    constexpr int dc[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int nr = r + dr[k];
      const int nc = c + dc[k];
      if (nr < 0 || nr >= kGridH || nc < 0 || nc >= kGridW) continue;
      const int n = nr * kGridW + nc;
      if (!grid.occupied(n) || seen[static_cast<std::size_t>(n)]) continue;
      seen[static_cast<std::size_t>(n)] = true;
      stack[top++] = n;
    }
  }
  return reached == total;
}

Descriptor descriptor(const MorphologyGrid& grid) {
  Descriptor d;
  for (Material m : grid.cells) {
    if (m != Material::Empty) ++d.n_voxels;
    if (is_actuator(m)) ++d.n_active;
  }
  return d;
}

int hamming_distance(const MorphologyGrid& a, const MorphologyGrid& b) {
  int d = 0;
  for (int s = 0; s < kSlots; ++s) d += a.cells[static_cast<std::size_t>(s)] != b.cells[static_cast<std::size_t>(s)];
  return d;
}

MutationResult mutate_morphology(const MorphologyGrid& grid, Rng& rng, double rate) {
  std::bernoulli_distribution flip(rate);
  std::uniform_int_distribution<int> material(0, kNumMaterials - 1);
  for (int attempt = 0; attempt < kMorphologyMutationRetries; ++attempt) {
    MorphologyGrid child = grid;
    for (Material& m : child.cells) {
      if (flip(rng)) m = static_cast<Material>(material(rng));
    }
    if (is_connected(child)) return {child, false};
  }
  return {grid, true};
}

MorphologyGrid random_morphology(Rng& rng) {
  std::uniform_int_distribution<int> material(0, kNumMaterials - 1);
  for (;;) {
    MorphologyGrid g;
    for (Material& m : g.cells) m = static_cast<Material>(material(rng));
    if (is_connected(g)) return g;
  }
}

std::vector<MorphologyGrid> interpolate_path(
    const MorphologyGrid& a, const MorphologyGrid& b,
    const std::function<bool(const MorphologyGrid&)>& known) {
  std::vector<MorphologyGrid> out;
  MorphologyGrid cur = a;
  for (int s = 0; s < kSlots; ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (cur.cells[i] == b.cells[i]) continue;
    cur.cells[i] = b.cells[i];
    if (cur == b) break;
    if (!is_connected(cur)) continue;
    if (known && known(cur)) continue;
    out.push_back(cur);
  }
  return out;
}

MorphologyGrid parse_grid(std::string_view text) {
  MorphologyGrid g;
  int row = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    line.erase(std::remove_if(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\r' || c == '\t'; }),
               line.end());
    if (line.empty()) continue;
    if (row >= kGridH) throw FormatError("grid has more than " + std::to_string(kGridH) + " rows");
    if (static_cast<int>(line.size()) != kGridW) throw FormatError("grid row '" + line + "' must have 5 digits");
    for (int c = 0; c < kGridW; ++c) {
      const char ch = line[static_cast<std::size_t>(c)];
      if (ch < '0' || ch > '4') throw FormatError(std::string("invalid material '") + ch + "'");
      g.at(row, c) = static_cast<Material>(ch - '0');
    }
    ++row;
  }
  if (row != kGridH) throw FormatError("grid must have 5 rows");
  return g;
}

std::string format_grid(const MorphologyGrid& grid) {
  std::string out;
  out.reserve(kSlots + kGridH);
  for (int r = 0; r < kGridH; ++r) {
    for (int c = 0; c < kGridW; ++c) out.push_back(static_cast<char>('0' + static_cast<int>(grid.at(r, c))));
    out.push_back('\n');
  }
  return out;
}

namespace {

struct Fixture {
  std::string_view name;
  std::string_view text;
};

constexpr Fixture kFixtures[] = {
    {"biped", "00000\n13331\n14041\n14041\n30003\n"},
    {"worm", "00000\n00000\n00000\n32423\n32423\n"},
    {"triped", "00000\n33333\n41414\n40404\n10101\n"},
    {"block", "00000\n04440\n03330\n03330\n01110\n"},
};

}  // namespace

MorphologyGrid fixture(std::string_view name) {
  for (const auto& f : kFixtures) {
    if (f.name == name) return parse_grid(f.text);
  }
  throw ConfigError("unknown fixture '" + std::string(name) + "'");
}

std::vector<std::string> fixture_names() {
  std::vector<std::string> out;
  for (const auto& f : kFixtures) out.emplace_back(f.name);
  return out;
}

}  // namespace voxdistill
