#include "gat/surface.hpp"

#include "gat/csv.hpp"

namespace gat {

void write_surface_csv(const PriceSurface& s, const std::filesystem::path& path, const std::string& value_name) {
  csv::Table t{{"t", "X", value_name}, {}};
  t.rows.reserve(s.values.size());
  for (std::size_t i = 0; i < s.t.size(); ++i)
    for (std::size_t j = 0; j < s.x.size(); ++j) t.rows.push_back({s.t[i], s.x[j], s(i, j)});
  csv::write(path, t);
}

}  // namespace gat
