#include <doctest.h>

#include "refdepth/reprojection.hpp"
