#ifndef POINTDN_IO_HPP
#define POINTDN_IO_HPP

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pointdn/grid.hpp"

namespace pointdn {

// Every numeric CSV cell is written with 17 significant digits.
inline std::string format_number(double value) {
    std::ostringstream out;
    out << std::setprecision(17) << value;
    return out.str();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    return out;
}

/// Field dump: header x,y,value_re[,value_im], one row per node in node order.
template <class T>
void write_field_csv(std::ostream& out, const Field<T>& field) {
    constexpr bool is_complex = std::is_same_v<T, Complex>;
    out << (is_complex ? "x,y,value_re,value_im\n" : "x,y,value_re\n");
    const Grid& g = field.grid();
    for (int k = 0; k < g.node_count(); ++k) {
        out << format_number(g.x(k)) << ',' << format_number(g.y(k)) << ',';
        if constexpr (is_complex) {
            out << format_number(field[k].real()) << ',' << format_number(field[k].imag()) << '\n';
        } else {
            out << format_number(field[k]) << '\n';
        }
    }
}

template <class T>
void write_field_csv(const std::filesystem::path& path, const Field<T>& field) {
    auto out = open_output(path);
    write_field_csv(out, field);
}

/// Boundary dump: header s,value with s the perimeter arclength in [0, 4).
inline void write_boundary_csv(std::ostream& out, const RealBoundary& data) {
    out << "s,value\n";
    const Grid& g = data.grid();
    for (int b = 0; b < g.boundary_count(); ++b)
        out << format_number(g.arclength()[b]) << ',' << format_number(data[b]) << '\n';
}

inline void write_boundary_csv(const std::filesystem::path& path, const RealBoundary& data) {
    auto out = open_output(path);
    write_boundary_csv(out, data);
}

inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, int expected_columns) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<double> row;
        std::stringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw Error(ErrorKind::Io, path.string() + ": bad number '" + cell + "'");
            }
        }
        if (static_cast<int>(row.size()) < expected_columns)
            throw Error(ErrorKind::Io, path.string() + ": expected " + std::to_string(expected_columns) + " columns");
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Reads a boundary CSV (s,value). Rows are matched to the nearest boundary node.
inline Vector<double> read_boundary_csv(const std::filesystem::path& path, const Grid& g) {
    const auto rows = read_numeric_csv(path, 2);
    if (static_cast<int>(rows.size()) != g.boundary_count()) {
        throw Error(ErrorKind::Io, path.string() + ": expected " + std::to_string(g.boundary_count()) +
                                       " boundary rows, found " + std::to_string(rows.size()));
    }
    Vector<double> values = Vector<double>::Zero(g.boundary_count());
    for (const auto& row : rows) values[g.nearest_boundary(row[0])] = row[1];
    return values;
}

/// Reads a field CSV (x,y,value) written on a grid of the same size.
inline RealField read_field_csv(const std::filesystem::path& path, const GridHandle& grid) {
    const auto rows = read_numeric_csv(path, 3);
    if (static_cast<int>(rows.size()) != grid->node_count()) {
        throw Error(ErrorKind::Io, path.string() + ": expected " + std::to_string(grid->node_count()) +
                                       " node rows, found " + std::to_string(rows.size()));
    }
    RealField out(grid);
    const double h = grid->h();
    for (const auto& row : rows) {
        const int i = static_cast<int>(std::lround(row[0] / h));
        const int j = static_cast<int>(std::lround(row[1] / h));
        require(i >= 0 && i < grid->n() && j >= 0 && j < grid->n(), "field CSV point outside the grid");
        out[grid->node(i, j)] = row[2];
    }
    return out;
}

}  // namespace pointdn

#endif  // POINTDN_IO_HPP
