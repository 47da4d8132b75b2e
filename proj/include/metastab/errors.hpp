#pragma once

#include <stdexcept>
#include <string>

namespace metastab {

// Every recoverable failure carries a stable machine-readable kind so the CLI
// can emit structured diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define METASTAB_ERROR(Name)                                                 \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(#Name, what) {}       \
    }

METASTAB_ERROR(InvalidInput);
METASTAB_ERROR(DetailedBalanceViolation);
METASTAB_ERROR(NotIrreducible);
METASTAB_ERROR(BadRowSum);
METASTAB_ERROR(DomainError);
METASTAB_ERROR(EmptySet);
METASTAB_ERROR(OverlappingSets);
METASTAB_ERROR(SolverNotConverged);
METASTAB_ERROR(Unbounded);
METASTAB_ERROR(TooLarge);
METASTAB_ERROR(DominationFailure);

#undef METASTAB_ERROR

}  // namespace metastab
