#ifndef WINDSCALE_GRD1_HPP
#define WINDSCALE_GRD1_HPP

#include <string>

#include "windscale/field.hpp"

namespace windscale {

// GRD1 container:
//   bytes 0-3   magic "GRD1"
//   bytes 4-7   version u32 = 1
//   5x u32 LE   T, C, n_lat, n_lon, dtype code (0 = f32, 1 = f64)
//   3x f64 LE   d_lat, d_lon, dt
//   u32 LE      name block length, then UTF-8 channel names joined by '\n'
//   payload     row-major [T,C,n_lat,n_lon], f32 (or f64 for code 1)
void write_grd1(const FieldSequence& seq, const std::string& path);
FieldSequence read_grd1(const std::string& path);

}  // namespace windscale

#endif
