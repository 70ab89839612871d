// Walk through the pipeline on the single-exchange chain: trees, diagrams,
// power counting, counterterm, and the renormalized pairing at two windows.

#include <iostream>
#include <random>

#include "nert/renorm.hpp"

using namespace nert;

int main() {
  std::cout << "right forests with 1..3 vertices:";
  for (int n = 1; n <= 3; ++n) std::cout << " " << enumerate_trees(n).size();
  std::cout << "\n";

  auto chain = DirectedTree::from_parents({0, 1});
  std::cout << "order-2 chain diagrams (vacuum): " << enumerate_diagrams(chain, {false}).size() << "\n";

  ContinuumSetup cs;  // d = 1, real Gaussian kernel, vacuum
  auto g = single_exchange_chain();
  auto a = s_amplitude(g, cs);
  auto omega = divergence_degree(a);
  auto deg = subtraction_degree(omega, 4);
  std::cout << "divergence degrees:";
  for (double w : omega) std::cout << " " << w;
  std::cout << "  subtraction degrees:";
  for (int d : deg) std::cout << " " << d;
  std::cout << "\n";

  RenormSettings rs;
  rs.window = 50;
  rs.xi = window_for(2);
  rs.quad.tol = 1e-9;
  auto ct = subtract(a, deg, rs);
  std::cout << "counterterm moments: " << ct.c.coef.size() << "\n";

  std::mt19937 rng(1);
  auto psi = random_probe(2, rng, 0, 3, 0.3);
  for (double T : {50.0, 100.0}) {
    rs.window = T;
    std::cout << "T = " << T << "  bare " << pairing(a, psi, rs).value << "  renormalized "
              << renormalized(a, psi, deg, rs).value << "\n";
  }
}
