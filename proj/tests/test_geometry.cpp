#include <doctest.h>

#include "refdepth/geometry.hpp"
