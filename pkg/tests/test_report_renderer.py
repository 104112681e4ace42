import pytest

from app.business.explainability_metrics import MetricsReport, TypedMetric
from app.business.report_renderer import CSV_HEADER, read_report_csv, render_report
from app.errors import ConfigError

HEADER_LINE = ','.join(CSV_HEADER) + '\n'


@pytest.fixture
def reports():
    return [
        MetricsReport(log='L1', model='logreg', auc=0.91234, parsimony=TypedMetric(1, 2, 3, 6),
                      fc=TypedMetric(0.5, 0.0, None, 0.25), irc=None, lod_at_10=1.4142135623730951),
        MetricsReport(log='L2', model='tree', auc=0.55, excluded_reason='avg AUC below 75'),
    ]


class TestCsv:
    def test_header_only(self):
        assert render_report([], format='csv') == HEADER_LINE

    def test_rows(self, reports):
        text = render_report(reports, format='csv')
        assert text == (HEADER_LINE
                        + "L1,logreg,0.91234,1,2,3,0.5,0.0,,,1.4142135623730951,\n"
                        + "L2,tree,0.55,,,,,,,,,avg AUC below 75\n")

    def test_quotes_commas(self):
        report = MetricsReport(log='L', model='m', excluded_reason='error: a, b')
        assert render_report([report]).endswith(',"error: a, b"\n')

    def test_read_back(self, reports):
        again = read_report_csv(render_report(reports, format='csv'))
        assert render_report(again, format='csv') == render_report(reports, format='csv')
        assert again[0].parsimony.total == 6
        assert again[0].fc.total == pytest.approx(0.25)
        assert again[1].parsimony is None

    def test_read_rejects_other_header(self):
        with pytest.raises(ConfigError):
            read_report_csv("a,b\n1,2\n")


class TestTable:
    def test_golden(self, reports):
        lines = render_report(reports[:1], format='table').split('\n')
        assert lines[0] == ("log  model      auc  C_control  C_case  C_event  FC_control  FC_case  "
                            "FC_event  IRC  LOD@10  excluded_reason")
        assert lines[1] == ("---  ------  ------  ---------  ------  -------  ----------  -------  "
                            "--------  ---  ------  ---------------")
        assert lines[2] == ("L1" + " " * 3 + "logreg" + " " * 2 + "0.9123" + " " * 10 + "1"
                            + " " * 7 + "2" + " " * 8 + "3" + " " * 6 + "0.5000" + " " * 3 + "0.0000"
                            + " " * 9 + "-" + " " * 4 + "-" + " " * 2 + "1.4142")
        assert lines[3] == ''

    def test_summary(self, reports):
        text = render_report(reports, format='summary')
        lines = text.splitlines()
        assert lines[0].split() == ['model', 'n_logs', 'auc', 'C_control', 'C_case', 'C_event',
                                    'FC_control', 'FC_case', 'FC_event', 'IRC', 'LOD@10']
        assert lines[2].split()[:3] == ['logreg', '1', '0.9123']
        assert lines[3].split()[:3] == ['tree', '0', '-']

    def test_unknown_format(self, reports):
        with pytest.raises(ConfigError):
            render_report(reports, format='xml')
