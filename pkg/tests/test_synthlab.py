import os
import tempfile
import unittest

import numpy as np


class TestGenerate(unittest.TestCase):
    def test_default_calibration(self):
        from services.synthlab import SynthConfig, generate

        roster = generate(SynthConfig(seed=1))
        ratio = len(set(roster.names())) / len(roster)

        self.assertEqual(len(roster), 61340)
        self.assertAlmostEqual(ratio, 0.44, delta=0.05)

    def test_same_seed_same_roster(self):
        from services.synthlab import make_synth_config, generate

        cfg = make_synth_config(n_people=2000, n_groups=5, regions={"North": 1, "South": 2}, nepotism_rate=0.1, seed=7)

        self.assertEqual(generate(cfg), generate(cfg))
        self.assertNotEqual(generate(cfg), generate(cfg.model_copy(update={"seed": 8})))

    def test_uniform_law_is_uniform(self):
        from scipy.stats import chisquare
        from services.synthlab import make_synth_config, generate

        cfg = make_synth_config(n_people=4000, name_law="uniform", alphabet_size=20, n_groups=4, seed=2)
        names = generate(cfg).names()
        counts = [names.count(n) for n in sorted(set(names))]

        self.assertEqual(len(counts), 20)
        self.assertGreater(chisquare(counts).pvalue, 0.001)

    def test_group_sizes_and_female_fraction(self):
        from services.roster import Gender
        from services.synthlab import make_synth_config, generate

        cfg = make_synth_config(
            n_people=3000, n_groups=3, group_sizes=[500, 1000, 1500],
            group_female_fraction={"G01": 0.9}, female_fraction=0.1, seed=4,
        )
        roster = generate(cfg)

        self.assertEqual([roster.group_size(g) for g in roster.groups()], [500, 1000, 1500])
        women = sum(1 for i in roster.group_index["G01"] if roster.persons[i].gender is Gender.F)
        self.assertGreater(women / 500, 0.8)

    def test_nepotism_lowers_distinct_ratio(self):
        from services.synthlab import make_synth_config, generate

        wins = 0
        for seed in range(20):
            cfg = make_synth_config(n_people=1000, n_groups=2, nepotism_group_rates={"G01": 0.3}, seed=seed)
            roster = generate(cfg)
            ratio = {g: len(set(roster.group_names(g))) / roster.group_size(g) for g in roster.groups()}
            if ratio["G01"] < ratio["G02"]:
                wins += 1

        self.assertGreaterEqual(wins, 19)

    def test_nepotism_is_patrilineal(self):
        from services.roster import Gender
        from services.synthlab import make_synth_config, generate

        base = make_synth_config(n_people=600, n_groups=1, seed=5)
        null = generate(base)
        nepo = generate(base.model_copy(update={"nepotism_rate": 0.5}))

        changed = [i for i in range(600) if null.persons[i] != nepo.persons[i]]
        self.assertTrue(changed)
        for i in changed:
            person = nepo.persons[i]
            self.assertIs(person.gender, Gender.M)
            fathers = [p for p in nepo.persons[:i] if p.gender is Gender.M]
            self.assertIn(person.last_name, {p.last_name for p in fathers})

    def test_immigrants_use_disjoint_reservoir(self):
        from services.synthlab import common_names, make_synth_config, generate

        cfg = make_synth_config(n_people=2000, n_groups=4, immigrant_group_rates={"G01": 1.0}, seed=6)
        roster = generate(cfg)
        common = common_names(cfg)

        self.assertTrue(all(n.startswith("X") for n in roster.group_names("G01")))
        self.assertFalse(any(n in common for n in roster.group_names("G01")))
        self.assertEqual(len(common), 7500)

    def test_nepotism_regions(self):
        from services.synthlab import make_synth_config, generate

        base = make_synth_config(
            n_people=2000, n_groups=2, regions={"North": 1, "South": 1},
            nepotism_rate=0.4, nepotism_regions=["South"], seed=9,
        )
        null = generate(base.model_copy(update={"nepotism_rate": 0.0}))
        nepo = generate(base)

        changed = [nepo.persons[i] for i in range(2000) if null.persons[i] != nepo.persons[i]]
        self.assertTrue(changed)
        self.assertTrue(all(p.region == "South" for p in changed))

    def test_empirical_law(self):
        from services.synthlab import common_names, make_synth_config, generate

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "freq.csv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("name,count\nRossi,50\nRusso,30\nFerrari,20\nrossi,10\n")
            cfg = make_synth_config(name_law="empirical", empirical_file=path, n_people=500, n_groups=2,
                                    common_list_size=2, seed=3)
            names = set(generate(cfg).names())
            common = common_names(cfg)

        self.assertEqual(names, {"ROSSI", "RUSSO", "FERRARI"})
        self.assertEqual(common.names, frozenset({"ROSSI", "RUSSO"}))


class TestSynthConfig(unittest.TestCase):
    def test_invalid_values(self):
        from services.synthlab import InvalidConfig, make_synth_config

        with self.assertRaises(InvalidConfig):
            make_synth_config(nepotism_rate=1.5)
        with self.assertRaises(InvalidConfig):
            make_synth_config(n_groups=2, nepotism_group_rates={"G07": 0.1})
        with self.assertRaises(InvalidConfig):
            make_synth_config(n_people=10, n_groups=2, group_sizes=[3, 3])
        with self.assertRaises(InvalidConfig):
            make_synth_config(name_law="empirical")

    def test_load_key_value_file(self):
        from services.synthlab import InvalidConfig, load_synth_config

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "synth.env")
            with open(path, "w", encoding="utf-8") as f:
                f.write(
                    "N_PEOPLE=1000\nn_groups=4\nREGIONS=Lazio:1,Sicily:2\n"
                    "NEPOTISM_GROUP_RATES=G01:0.3,G02:0.1\nNEPOTISM_REGIONS=Sicily\nSEED=11\n"
                )
            cfg = load_synth_config(path, seed=12)

            self.assertEqual(cfg.n_people, 1000)
            self.assertEqual(cfg.regions, {"Lazio": 1.0, "Sicily": 2.0})
            self.assertEqual(cfg.nepotism_group_rates, {"G01": 0.3, "G02": 0.1})
            self.assertEqual(cfg.nepotism_regions, ["Sicily"])
            self.assertEqual(cfg.seed, 12)

            with open(path, "w", encoding="utf-8") as f:
                f.write("NEPOTISM=0.2\n")
            with self.assertRaises(InvalidConfig):
                load_synth_config(path)

        with self.assertRaises(InvalidConfig):
            load_synth_config(os.path.join(tmp, "missing.env"))


class TestMechanisms(unittest.TestCase):
    def test_power_curve_monotone(self):
        from services.scarcity import TestConfig
        from services.synthlab import make_synth_config, power_curve

        base = make_synth_config(n_people=10000, n_groups=20, seed=31)
        curve = power_curve(base, [0.0, 0.1, 0.4], 10, TestConfig(n_sims=199, min_group_size=1, seed=5), alpha=0.05)
        rates = [p.rate for p in curve.points]

        self.assertEqual(rates, sorted(rates))
        sigma = np.sqrt(0.05 * 0.95 / 10)
        self.assertLessEqual(rates[0], 0.05 + 3 * sigma)
        self.assertGreaterEqual(rates[-1], 0.9)
        self.assertEqual(curve.target_group, "G01")

    def test_power_curve_rejects_unsorted_grid(self):
        from services.scarcity import TestConfig
        from services.synthlab import make_synth_config, power_curve

        with self.assertRaises(ValueError):
            power_curve(make_synth_config(n_people=100, n_groups=2), [0.4, 0.1], 1, TestConfig(n_sims=9), 0.05)

    def test_gender_mechanism(self):
        from services.roster import Gender
        from services.scarcity import TestConfig
        from services.synthlab import make_synth_config, power_curve

        base = make_synth_config(n_people=10000, n_groups=20, seed=77)
        cfg = TestConfig(n_sims=199, min_group_size=1, seed=3)

        male = power_curve(base, [0.15], 10, cfg, alpha=0.05, gender=Gender.M)
        female = power_curve(base, [0.15], 10, cfg, alpha=0.05, gender=Gender.F)

        self.assertGreaterEqual(male.points[0].rate, 0.8)
        self.assertLessEqual(female.points[0].rate, 0.2)

    def test_immigration_mechanism(self):
        from services.multiplicity import classify, qvalues_for_results
        from services.scarcity import TestConfig, analyze_groups
        from services.strata import filter_common
        from services.synthlab import common_names, make_synth_config, generate

        immigrant_groups = {f"G{i:02d}": 0.5 for i in range(1, 6)}
        cfg = TestConfig(n_sims=999, min_group_size=50, seed=1)

        def spurious(roster):
            results = analyze_groups(roster, None, cfg)
            flagged = classify(results, qvalues_for_results(results, seed=0))
            return sum(1 for c in flagged if c.highly_significant and c.result.group not in immigrant_groups)

        before, after = [], []
        for trial in range(5):
            synth = make_synth_config(
                n_people=10000, n_groups=20, alphabet_size=5000,
                immigrant_group_rates=immigrant_groups, seed=100 + trial,
            )
            roster = generate(synth)
            before.append(spurious(roster))
            after.append(spurious(filter_common(roster, common_names(synth))))

        self.assertGreaterEqual(np.mean(before), 3)
        self.assertLessEqual(np.mean(after), 1)

    def test_latitude_mechanism(self):
        from services.scarcity import TestConfig
        from services.strata import region_sweep
        from services.synthlab import make_synth_config, generate

        south = 0
        flagged = 0
        for seed in range(3):
            synth = make_synth_config(
                n_people=4000, n_groups=4, regions={"North": 1, "South": 1},
                nepotism_rate=0.3, nepotism_regions=["South"], seed=seed,
            )
            summary = region_sweep(generate(synth), TestConfig(n_sims=199, min_group_size=50, seed=seed))
            cells = summary.flagged_cells()
            flagged += len(cells)
            south += sum(1 for c in cells if c.stratum == "South")

        self.assertGreater(flagged, 0)
        self.assertGreaterEqual(south / flagged, 0.8)


if __name__ == "__main__":
    unittest.main()
