#ifndef FEDSIM_DIAGNOSTICS_HPP_
#define FEDSIM_DIAGNOSTICS_HPP_

#include <iosfwd>

namespace fedsim {

// Checks every analytic gradient against central finite differences
// (eps = 1e-5, relative tolerance 1e-5, `cases` random cases per op).
// Prints one line per op; returns true when everything matches.
bool run_gradcheck(std::ostream& out, int cases = 50);

// Fast cross-module invariant sweep; one line per check.
bool run_selftest(std::ostream& out);

}  // namespace fedsim

#endif  // FEDSIM_DIAGNOSTICS_HPP_
