import os
import sys

import requests

SMALL_RUN = {
    "users": 2,
    "aperture_area": 0.09,
    "quadrature_order": 6,
    "shape_resolution": 9,
    "iterations": 2,
    "flexible_mimo_iterations": 1,
}


class FcapaApiChecker:
    def __init__(self, base_url):
        self.base_url = base_url.rstrip("/")
        self.checks_run = 0
        self.checks_passed = 0

    def run_check(self, name, method, endpoint, expected_status, data=None):
        """Run a single API check against a live server"""
        url = f"{self.base_url}/api/{endpoint}"
        self.checks_run += 1
        print(f"\nChecking {name}...")

        try:
            if method == "GET":
                response = requests.get(url, timeout=600)
            else:
                response = requests.post(url, json=data, timeout=600)
        except requests.RequestException as e:
            print(f"Failed - Error: {e}")
            return False, {}

        if response.status_code != expected_status:
            print(f"Failed - Expected {expected_status}, got {response.status_code}")
            try:
                print(f"Error: {response.json().get('detail', 'No detail provided')}")
            except ValueError:
                print(f"Response: {response.text}")
            return False, {}

        self.checks_passed += 1
        print(f"Passed - Status: {response.status_code}")
        try:
            return True, response.json()
        except ValueError:
            return True, {}

    def check_health(self):
        return self.run_check("Health Check", "GET", "health", 200)[0]

    def check_defaults(self):
        ok, body = self.run_check("Default Settings", "GET", "defaults", 200)
        if ok:
            print(f"Carrier {body['frequency_hz'] / 1e9:g} GHz, {body['users']} users")
        return ok

    def check_solve(self):
        ok, body = self.run_check(
            "Solve FCAPA",
            "POST",
            "solve/",
            200,
            data={"scheme": "fcapa", "overrides": SMALL_RUN},
        )
        if ok:
            print(f"ARPU {body['arpu']:.4f} bit/s/Hz after {body['iterations']} iterations")
        return ok

    def check_bad_settings(self):
        return self.run_check(
            "Reject Unknown Setting",
            "POST",
            "solve/",
            422,
            data={"scheme": "capa", "overrides": {"antennas": 4}},
        )[0]

    def check_sweep(self):
        ok, body = self.run_check(
            "Power Sweep",
            "POST",
            "sweeps/",
            200,
            data={"parameter": "power", "values": [0.05, 0.1], "realizations": 1, "overrides": SMALL_RUN},
        )
        if ok:
            for point in body["summary"]:
                print(f"  {point['scheme']} P_T={point['param_value']}: {point['mean_arpu']}")
        return ok

    def run_all(self):
        """Run all checks in sequence"""
        print("Starting FCAPA API checks")

        if not self.check_health():
            print("Health check failed, stopping")
            return False

        self.check_defaults()
        self.check_solve()
        self.check_bad_settings()
        self.check_sweep()

        print(f"\nChecks passed: {self.checks_passed}/{self.checks_run}")
        return self.checks_passed == self.checks_run


def main():
    api_url = os.environ.get("FCAPA_API_URL", "http://localhost:8001")
    print(f"Checking API at: {api_url}")
    return 0 if FcapaApiChecker(api_url).run_all() else 1


if __name__ == "__main__":
    sys.exit(main())
