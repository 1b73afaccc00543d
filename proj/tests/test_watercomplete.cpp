#include <doctest.h>

#include "refdepth/watercomplete.hpp"
