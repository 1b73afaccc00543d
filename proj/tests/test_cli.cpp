#include <doctest.h>

#include "refdepth/solver.hpp"
