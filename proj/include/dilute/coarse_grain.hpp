#pragma once

// Mesoscopic coarse graining of a joint (spin, edge) configuration: good and
// bad boxes, phase labels, layer profiles, and the plus/minus box max-flow.

#include <cstdint>
#include <map>
#include <vector>

#include "dilute/fk.hpp"
#include "dilute/wulff.hpp"

namespace dilute {

enum class BoxFault {
  none,
  outside,      // box not contained in the region
  no_crossing,  // no cluster meets all 2d faces
  not_unique,   // several clusters meet all 2d faces
  neighbor,     // crossing cluster not joined by an open edge to a neighbour's
  diameter,     // a residual cluster meeting the box is too wide
  density       // |B‡ ∩ B| outside K^d m* (1 ± ε)
};

const char* to_string(BoxFault fault) noexcept;

struct BoxInfo {
  Point index;
  std::vector<std::size_t> sites;     // sites of the box inside the lattice
  bool interior = false;
  bool good = false;
  BoxFault fault = BoxFault::outside;  // first failed condition
  std::vector<std::size_t> crossing;   // B†, sorted
  std::size_t cluster = npos;          // real-cluster label of B‡
  double density = 0.0;                // |B‡ ∩ B| / K^d
};

struct BoxClassification {
  int K = 1;
  double eps = 0.0;
  double m_star = 1.0;
  std::vector<BoxInfo> boxes;
  std::map<Point, std::size_t> position;  // box index -> entry of `boxes`
  std::vector<std::size_t> real_label;    // real Λ-clusters per site

  const BoxInfo* find(const Point& index) const;
  std::size_t good_count() const;
};

/// Evaluates the three good-box conditions exactly by cluster search. Open
/// edges are those with ω = 1 and J = 1. Condition (ii) removes the crossing
/// clusters of every interior box and bounds residual clusters in the
/// L-infinity diameter by K/2.
BoxClassification classify_boxes(const EdgeConfig& omega, const GibbsSpec& spec, int K,
                                 double eps, double m_star);

struct PhaseLabeling {
  std::map<Point, int> label;  // +1, -1 or 0 per box index

  int at(const Point& index) const;  // 0 for unknown boxes
  std::size_t count(int value) const;
};

/// Ψ(i) = spin of B†(i) on good boxes, 0 elsewhere. Throws InvariantViolation
/// if a crossing cluster is not constant under σ.
PhaseLabeling phase_labels(const BoxClassification& classification, const Spins& spins);

/// Ordered layers H_1..H_S of box indices.
using Layers = std::vector<std::vector<Point>>;

/// Shells of boxes whose macroscopic cube lies in W(b_l) but not in
/// W(b_{l-1}), for radii b_0 < b_1 < ... < b_S of `shape` placed at box `anchor`.
Layers wulff_layers(const WulffShape& shape, const std::vector<double>& radii, const Scales& scales,
                    const Point& anchor = {});

/// f_l^s for s = -1, 0, +1 (columns 0, 1, 2).
std::vector<std::array<std::size_t, 3>> layer_profile(const PhaseLabeling& labels, const Layers& layers);

struct FlowResult {
  bool spanning = false;
  std::size_t flow = 0;                         // f_I^↔
  std::vector<std::vector<Point>> paths;        // one box path per unit of flow
};

/// Spanning iff f_l^{-1} + f_l^0 > 0 for the first `leading` layers (all when
/// 0). The flow is the maximum number of box-disjoint nearest-neighbour paths
/// inside the union of the layers from a +1 box to a -1 box (Dinic on the
/// vertex-split graph). Throws InvalidParameter for empty, overlapping or
/// mixed-dimension layers.
FlowResult spanning_and_flow(const PhaseLabeling& labels, const Layers& layers,
                             std::size_t leading = 0);

/// Max number of box-disjoint paths from +1 to -1 boxes within `boxes`.
FlowResult max_box_flow(const PhaseLabeling& labels, const std::vector<Point>& boxes);

/// ∫ M_K over the boxes contained in `window`, each weighing (K/N)^d.
double profile_integral(const Spins& spins, const GibbsSpec& spec, const Scales& scales,
                        double m_star, const LatticeRegion& window);

}  // namespace dilute
