#ifndef HVF_HVF_HPP
#define HVF_HVF_HPP

#include "hvf/automorph.hpp"
#include "hvf/domain.hpp"
#include "hvf/matrix.hpp"
#include "hvf/metric.hpp"
#include "hvf/nsw.hpp"
#include "hvf/parallel.hpp"
#include "hvf/parse.hpp"
#include "hvf/polynomial.hpp"
#include "hvf/rational.hpp"
#include "hvf/report.hpp"
#include "hvf/sobolev.hpp"
#include "hvf/vector_field.hpp"

#endif
