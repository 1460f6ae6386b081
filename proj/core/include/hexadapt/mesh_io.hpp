#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hexadapt/mesh.hpp"

namespace hexadapt {

/// Per-element scalar, ordered like HexMesh::live_elements().
struct CellField {
  std::string name;
  std::vector<double> values;
};

/// Writes the live mesh as a legacy ASCII VTK unstructured grid (hexahedron
/// cell type 12). Cell data always contains `level` and `template_id`; the
/// id -> template-name table is written into the title line. Extra per-cell
/// fields (e.g. the error map) are appended. When `positions` is null the
/// rest configuration is written.
void write_vtk(std::ostream& out, const HexMesh& mesh, const NodalField* positions = nullptr,
               std::span<const CellField> fields = {});

void write_vtk_file(const std::string& path, const HexMesh& mesh,
                    const NodalField* positions = nullptr, std::span<const CellField> fields = {});

}  // namespace hexadapt
