#include "hexadapt/mesh_io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

namespace hexadapt {

void write_vtk(std::ostream& out, const HexMesh& mesh, const NodalField* positions,
               std::span<const CellField> fields) {
  const auto nodes = mesh.live_nodes();
  const auto elems = mesh.live_elements();
  for (const auto& f : fields) {
    if (f.values.size() != elems.size()) {
      throw InvalidArgument("write_vtk: field '" + f.name + "' has wrong length");
    }
  }
  std::vector<std::int64_t> compact(mesh.node_capacity(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) compact[nodes[i].index()] = static_cast<std::int64_t>(i);

  std::map<std::string, int> template_ids{{"root", 0}};
  for (ElemId e : elems) {
    const auto& name = mesh.element(e).template_name;
    if (!name.empty()) template_ids.emplace(name, 0);
  }
  int next = 0;
  for (auto& [name, id] : template_ids) id = next++;

  out << "# vtk DataFile Version 3.0\n";
  out << "hexadapt mesh; template_id:";
  for (const auto& [name, id] : template_ids) out << ' ' << id << '=' << name;
  out << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << std::setprecision(17);
  out << "POINTS " << nodes.size() << " double\n";
  for (NodeId n : nodes) {
    const Vec3& p = positions ? (*positions)[n.index()] : mesh.rest_position(n);
    out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
  out << "CELLS " << elems.size() << ' ' << elems.size() * 9 << '\n';
  for (ElemId e : elems) {
    out << 8;
    for (NodeId n : mesh.element(e).nodes) out << ' ' << compact[n.index()];
    out << '\n';
  }
  out << "CELL_TYPES " << elems.size() << '\n';
  for (std::size_t i = 0; i < elems.size(); ++i) out << "12\n";

  out << "CELL_DATA " << elems.size() << '\n';
  out << "SCALARS level int 1\nLOOKUP_TABLE default\n";
  for (ElemId e : elems) out << mesh.element(e).level << '\n';
  out << "SCALARS template_id int 1\nLOOKUP_TABLE default\n";
  for (ElemId e : elems) {
    const auto& name = mesh.element(e).template_name;
    out << template_ids.at(name.empty() ? "root" : name) << '\n';
  }
  for (const auto& f : fields) {
    out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
    for (double v : f.values) out << v << '\n';
  }
}

void write_vtk_file(const std::string& path, const HexMesh& mesh, const NodalField* positions,
                    std::span<const CellField> fields) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  write_vtk(f, mesh, positions, fields);
}

}  // namespace hexadapt
