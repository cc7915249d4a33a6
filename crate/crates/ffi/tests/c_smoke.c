#include <math.h>
#include <stdio.h>
#include <string.h>
#include "ringtrap.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s (line %d)\n", #cond, __LINE__); return 1; } } while (0)

int main(void) {
    RtField *field = NULL;
    RtSystem *sys = NULL;
    char msg[256];

    CHECK(strlen(rt_version()) > 0);
    CHECK(rt_field_solve(3e-6, 1.2e-6, 100e-9, &field) == RT_STATUS_OK);
    size_t n_rho = 0, n_z = 0;
    double h = 0.0;
    CHECK(rt_field_grid(field, &n_rho, &n_z, &h) == RT_STATUS_OK);
    CHECK(n_rho > 0 && n_z > 0 && fabs(h - 100e-9) < 1e-15);

    CHECK(rt_system_new(field, "Xe", 0.2, 3e-6, &sys) == RT_STATUS_UNKNOWN_SPECIES);
    CHECK(rt_last_error(msg, sizeof msg) > 0 && strstr(msg, "Xe") != NULL);

    CHECK(rt_system_new(field, "Rb", 0.2, 3e-6, &sys) == RT_STATUS_OK);
    double v = 0.0;
    CHECK(rt_system_optimal_voltage(sys, &v) == RT_STATUS_OK && v > 0.0);
    RtTrap trap;
    CHECK(rt_system_characterize(sys, v, &trap) == RT_STATUS_OK);
    CHECK(trap.depth_mhz > 0.0 && trap.omega_r > 0.0);
    double u = 0.0, f[3];
    CHECK(rt_system_potential(sys, v, trap.rho_min, 0.0, trap.z_min, &u, f) == RT_STATUS_OK);
    CHECK(fabs(u - trap.u_min_j) < 1e-3 * fabs(trap.u_min_j));
    CHECK(rt_system_characterize(sys, 0.0, &trap) == RT_STATUS_NO_MINIMUM);
    CHECK(rt_system_characterize(NULL, v, &trap) == RT_STATUS_NULL_POINTER);

    rt_system_free(sys);
    rt_field_free(field);
    puts("ok");
    return 0;
}
