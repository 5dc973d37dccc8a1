import os
import tempfile
import unittest

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "roster10.csv")


def _person(last, group, gender="Unknown", region=None, first=None):
    from services.roster import Gender, Person

    return Person(
        last_name_raw=last,
        last_name=last,
        group=group,
        first_name_raw=first,
        first_name=first,
        gender=Gender(gender),
        region=region,
    )


class TestMacroRegions(unittest.TestCase):
    def test_italian_default(self):
        from services.strata import MacroRegion, italian_macro_map

        macro_map = italian_macro_map()

        self.assertEqual(len(macro_map), 20)
        self.assertEqual({macro_map.macro_of(r) for r in macro_map.regions}, set(MacroRegion))
        self.assertIs(macro_map.macro_of("sicily"), MacroRegion.SICILY)
        self.assertIs(macro_map.macro_of("EMILIA-ROMAGNA"), MacroRegion.NORTH)
        self.assertIsNone(macro_map.macro_of(None))
        self.assertEqual(len(macro_map.regions_of(MacroRegion.CENTER)), 4)

    def test_load_from_file(self):
        from services.strata import MacroRegion, load_macro_map

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "macro.txt")
            with open(path, "w", encoding="utf-8") as f:
                f.write("# регион=макрорегион\nScotland=north\n\nWales = South\n")
            macro_map = load_macro_map(path)

            self.assertIs(macro_map.macro_of("scotland"), MacroRegion.NORTH)
            self.assertIs(macro_map.macro_of("Wales"), MacroRegion.SOUTH)

            with open(path, "w", encoding="utf-8") as f:
                f.write("Scotland=Highlands\n")
            with self.assertRaises(ValueError):
                load_macro_map(path)


class TestFilters(unittest.TestCase):
    def test_restrict_rebuilds_groups(self):
        from services.roster import Gender, Roster
        from services.strata import by_gender, by_region, exclude_groups, restrict

        roster = Roster([
            _person("ROSSI", "A", "F", "Lazio"),
            _person("BIANCHI", "A", "M", "Sicily"),
            _person("VERDI", "B", "M", "Lazio"),
        ])

        men = restrict(roster, by_gender(Gender.M))
        self.assertEqual(men.names(), ["BIANCHI", "VERDI"])
        self.assertEqual(restrict(roster, by_region("lazio")).groups(), ["A", "B"])
        self.assertEqual(exclude_groups(roster, ["A"]).groups(), ["B"])
        self.assertEqual(exclude_groups(roster, []), roster)

    def test_filter_common(self):
        from services.roster import Roster
        from services.strata import CommonNameList, filter_common

        roster = Roster([_person("ROSSI", "A"), _person("XU", "A"), _person("ROSSI", "B")])
        common = CommonNameList(frozenset({"ROSSI"}))

        kept = filter_common(roster, common)
        self.assertEqual(kept.names(), ["ROSSI", "ROSSI"])

        with self.assertRaises(ValueError):
            filter_common(roster, CommonNameList(frozenset()))

    def test_load_common_names_normalizes(self):
        from services.strata import load_common_names

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "common.txt")
            with open(path, "w", encoding="utf-8") as f:
                f.write("Smith\nO'Brien\n\n(—)\nJones-Lee\n")
            common = load_common_names(path)

        self.assertEqual(common.names, frozenset({"SMITH", "OBRIEN", "JONES"}))
        self.assertEqual(common.label, "common")

    def test_filters_are_idempotent_and_commute(self):
        from services.roster import ingest_roster
        from services.strata import CommonNameList, by_region, exclude_groups, filter_common, restrict

        roster, _ = ingest_roster(FIXTURE)
        common = CommonNameList(frozenset({"ROSSI", "DANGELO", "DELUCA", "BIANCHI"}))
        steps = [
            lambda r: restrict(r, by_region("Lazio")),
            lambda r: filter_common(r, common),
            lambda r: exclude_groups(r, ["FIS/01"]),
        ]

        for step in steps:
            self.assertEqual(step(step(roster)), step(roster))
        for first in steps:
            for second in steps:
                self.assertEqual(second(first(roster)), first(second(roster)))

    def test_restrict_fixture_to_sicily(self):
        from services.roster import distinct_count, ingest_roster
        from services.strata import by_region, restrict

        roster, _ = ingest_roster(FIXTURE)
        sicily = restrict(roster, by_region("Sicily"))

        self.assertEqual(len(sicily), 2)
        self.assertEqual(sicily.groups(), ["MAT/05"])
        self.assertEqual(sicily.names(), ["DANGELO", "NICOLO"])
        self.assertEqual(distinct_count(sicily.group_names("MAT/05")), 2)


class TestGenderSplit(unittest.TestCase):
    def test_each_gender_has_own_pool(self):
        from services.roster import Roster
        from services.scarcity import TestConfig
        from services.strata import gender_split_analyze

        persons = [_person(f"F{i}", "A", "F") for i in range(30)]
        persons += [_person(f"M{i % 10}", "A", "M") for i in range(50)]
        persons += [_person("U", "A", "Unknown")]
        roster = Roster(persons)

        female, male = gender_split_analyze(roster, TestConfig(n_sims=100, min_group_size=10))

        self.assertEqual(female[0].pool_size, 30)
        self.assertEqual(male[0].pool_size, 50)
        self.assertEqual(female[0].stratum, "F")
        self.assertEqual(male[0].stratum, "M")

    def test_matches_plain_analysis_of_filtered_roster(self):
        from services.roster import Gender, Roster
        from services.scarcity import TestConfig, analyze_groups
        from services.strata import by_gender, gender_split_analyze, restrict

        persons = [_person(f"F{i % 12}", "A", "F") for i in range(40)]
        persons += [_person(f"M{i % 15}", "A", "M") for i in range(40)]
        roster = Roster(persons)
        cfg = TestConfig(n_sims=200, min_group_size=10, seed=4)

        female, male = gender_split_analyze(roster, cfg)

        women = restrict(roster, by_gender(Gender.F))
        men = restrict(roster, by_gender(Gender.M))
        self.assertEqual(female, analyze_groups(women, women, cfg, stratum="F"))
        self.assertEqual(male, analyze_groups(men, men, cfg, stratum="M"))

    def test_national_pool_override(self):
        from services.roster import Gender, Roster
        from services.scarcity import TestConfig, analyze_groups
        from services.strata import by_gender, gender_split_analyze, restrict

        persons = [_person(f"F{i}", "A", "F") for i in range(30)]
        persons += [_person(f"M{i % 10}", "A", "M") for i in range(50)]
        roster = Roster(persons)
        cfg = TestConfig(n_sims=100, min_group_size=10)

        female, male = gender_split_analyze(roster, cfg, pool=roster)

        self.assertEqual(female[0].pool_size, 80)
        self.assertEqual(male[0].pool_size, 80)
        women = restrict(roster, by_gender(Gender.F))
        self.assertEqual(female, analyze_groups(women, roster, cfg, stratum="F"))

    def test_missing_gender_gives_empty_side(self):
        from services.roster import Roster
        from services.scarcity import TestConfig
        from services.strata import gender_split_analyze

        roster = Roster([_person(f"F{i}", "A", "F") for i in range(20)])
        female, male = gender_split_analyze(roster, TestConfig(n_sims=50, min_group_size=5))

        self.assertEqual(len(female), 1)
        self.assertEqual(male, [])


class TestCommonProportion(unittest.TestCase):
    def test_two_low_groups_of_forty(self):
        from services.roster import Roster
        from services.strata import CommonNameList, common_name_proportion

        common = CommonNameList(frozenset({"COMMON"}))
        persons = []
        for g in range(40):
            if g == 3:
                hits = 2
            elif g == 17:
                hits = 3
            else:
                hits = 8 + g % 3
            persons += [_person("COMMON", f"G{g:02d}")] * hits
            persons += [_person(f"RARE{g}x{i}", f"G{g:02d}") for i in range(10 - hits)]

        report = common_name_proportion(Roster(persons), common)

        self.assertEqual(report.low_groups, frozenset({"G03", "G17"}))
        self.assertAlmostEqual(report.fractions["G03"], 0.2)
        self.assertLess(report.cutoff, 0.8)


class TestSweeps(unittest.TestCase):
    def test_region_sweep_counts(self):
        from services.roster import Roster
        from services.scarcity import TestConfig
        from services.strata import region_sweep

        persons = []
        for region in ("Lazio", "Sicily"):
            persons += [_person(f"N{i}", "BIG", region=region) for i in range(60)]
            persons += [_person(f"S{i}", "SMALL", region=region) for i in range(5)]
        persons += [_person("NOREGION", "BIG")]

        summary = region_sweep(Roster(persons), TestConfig(n_sims=99, min_group_size=50), alpha=0.05)

        self.assertEqual(summary.counts["BIG"].n_regions_tested, 2)
        self.assertEqual(summary.counts["SMALL"].label, "0/0")
        self.assertIsNone(summary.counts["SMALL"].proportion)
        self.assertEqual(summary.ranking()[-1], "SMALL")
        self.assertEqual(len(summary.cells), 4)
        self.assertEqual(summary.flagged_cells(), [])

    def test_macro_sweep_has_five_sections(self):
        from services.roster import Roster
        from services.scarcity import TestConfig
        from services.strata import MacroRegion, macro_sweep

        persons = [_person(f"N{i % 20}", "A", region="Lombardy") for i in range(40)]
        persons += [_person(f"N{i % 25}", "A", region="Calabria") for i in range(40)]

        sweep = macro_sweep(Roster(persons), TestConfig(n_sims=50, min_group_size=10))

        self.assertEqual(set(sweep), set(MacroRegion))
        self.assertEqual(sweep[MacroRegion.NORTH][0].pool_size, 40)
        self.assertEqual(sweep[MacroRegion.NORTH][0].stratum, "North")
        self.assertEqual(sweep[MacroRegion.SICILY], [])

    def test_region_names_compared_case_insensitively(self):
        from services.roster import Roster
        from services.scarcity import TestConfig
        from services.strata import region_sweep

        persons = [_person(f"N{i}", "BIG", region="Lazio") for i in range(30)]
        persons += [_person(f"N{i}", "BIG", region="LAZIO") for i in range(30, 60)]

        summary = region_sweep(Roster(persons), TestConfig(n_sims=99, min_group_size=50))

        self.assertEqual(len(summary.cells), 1)
        self.assertEqual(summary.cells[0].n_people, 60)
        self.assertEqual(summary.counts["BIG"].n_regions_tested, 1)

    def test_region_cell_matches_plain_analysis(self):
        from services.roster import Roster
        from services.scarcity import TestConfig, analyze_groups
        from services.strata import by_region, region_sweep, restrict

        persons = [_person(f"N{i % 30}", "A", region="Sicily") for i in range(60)]
        persons += [_person(f"N{i % 40}", "A", region="Lazio") for i in range(60)]
        roster = Roster(persons)
        cfg = TestConfig(n_sims=200, min_group_size=50, seed=11)

        summary = region_sweep(roster, cfg)
        sicily = restrict(roster, by_region("Sicily"))

        cells = [c for c in summary.cells if c.stratum == "Sicily"]
        self.assertEqual(cells, analyze_groups(sicily, sicily, cfg, stratum="Sicily"))

    def test_macro_sweep_national_pool(self):
        from services.roster import Roster
        from services.scarcity import TestConfig
        from services.strata import MacroRegion, macro_sweep

        persons = [_person(f"N{i % 20}", "A", region="Lombardy") for i in range(40)]
        persons += [_person(f"N{i % 25}", "A", region="Calabria") for i in range(40)]
        roster = Roster(persons)

        sweep = macro_sweep(roster, TestConfig(n_sims=50, min_group_size=10), pool=roster)

        self.assertEqual(sweep[MacroRegion.NORTH][0].pool_size, 80)
        self.assertEqual(sweep[MacroRegion.NORTH][0].n_people, 40)


if __name__ == "__main__":
    unittest.main()
