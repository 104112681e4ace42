import io

import pytest

from app import create_app
from app.business.event_log import dump_schema, load_schema, serialize_csv
from app.business.report_renderer import CSV_HEADER
from app.business.synthetic_logs import SynthSpec, generate_log


@pytest.fixture
def client():
    app = create_app()
    app.config['TESTING'] = True
    return app.test_client()


def test_health(client):
    response = client.get('/health')
    assert response.status_code == 200
    assert response.get_json() == {'status': 'ok'}


class TestGuide:
    def test_answers(self, client):
        response = client.post('/api/guide', json={'answers': [False, False, True]})
        body = response.get_json()
        assert response.status_code == 200
        assert body['model'] == 'XGB'
        assert body['asked'] == ['explainability_over_performance', 'parsimony_very_important',
                                 'faithfulness_important']
        assert body['implemented_in_toolkit'] is False

    def test_questionnaire(self, client):
        response = client.post('/api/guide', json={'questionnaire': {'data_heterogeneous': True}})
        assert response.get_json()['model'] == 'LLM'

    def test_bad_questionnaire(self, client):
        response = client.post('/api/guide', json={'questionnaire': {'colour': True}})
        assert response.status_code == 400

    def test_not_enough_answers(self, client):
        response = client.post('/api/guide', json={'answers': []})
        assert response.status_code == 400
        assert 'not enough answers' in response.get_json()['error']

    def test_empty_body(self, client):
        assert client.post('/api/guide', json={}).status_code == 400


class TestMetrics:
    def test_worked_example(self, client):
        types = ['control'] * 3 + ['case'] * 3 + ['event'] * 7
        favoured_pi = {0, 3, 4, 6, 7, 8, 9, 10, 11, 12}
        favoured_e = {0, 1, 3, 4, 6, 7, 8, 9, 10, 11}
        w_pi = [1.0 + i if i in favoured_pi else 0.0 for i in range(13)]
        w_e = [1.0 + i if i in favoured_e else 0.0 for i in range(13)]
        response = client.post('/api/metrics', json={'types': types, 'w_pi': w_pi, 'w_e': w_e})
        body = response.get_json()
        assert response.status_code == 200
        assert body['lod_at_k'] == pytest.approx(2 ** 0.5)
        assert body['parsimony'] == {'control': 2, 'case': 2, 'event': 6, 'total': 10}
        assert body['k'] == 10
        assert -1.0 <= body['irc'] <= 1.0

    def test_degenerate_irc_is_null(self, client):
        response = client.post('/api/metrics', json={'types': ['control', 'case'], 'w_pi': [1, 1],
                                                     'w_e': [1, 2]})
        assert response.get_json()['irc'] is None

    def test_length_mismatch(self, client):
        response = client.post('/api/metrics', json={'types': ['control'], 'w_pi': [1, 2], 'w_e': [1, 2]})
        assert response.status_code == 400

    def test_unknown_type(self, client):
        response = client.post('/api/metrics', json={'types': ['colour'], 'w_pi': [1], 'w_e': [1]})
        assert response.status_code == 400
        assert 'unknown attribute type' in response.get_json()['error']


class TestBench:
    def test_upload_returns_csv(self, client):
        log = generate_log(SynthSpec(n_cases=100, rule='case_threshold', rule_args=('s1', '0.5'), seed=3))
        data = {
            'log': (io.BytesIO(serialize_csv(log).encode('utf-8')), 'my log.csv'),
            'schema': dump_schema(log.schema),
            'seed': '5',
            'max_prefix': '2',
            'models': 'logreg,tree',
        }
        response = client.post('/api/bench', data=data, content_type='multipart/form-data')
        assert response.status_code == 200, response.get_data(as_text=True)
        lines = response.get_data(as_text=True).strip().split('\n')
        assert lines[0] == ','.join(CSV_HEADER)
        assert [line.split(',')[:2] for line in lines[1:]] == [['my_log.csv', 'logreg'],
                                                               ['my_log.csv', 'tree']]

    def test_missing_seed(self, client):
        log = generate_log(SynthSpec(n_cases=20, seed=1))
        data = {'log': (io.BytesIO(serialize_csv(log).encode('utf-8')), 'l.csv'),
                'schema': dump_schema(log.schema)}
        response = client.post('/api/bench', data=data, content_type='multipart/form-data')
        assert response.status_code == 400

    def test_missing_file(self, client):
        response = client.post('/api/bench', data={'seed': '1'}, content_type='multipart/form-data')
        assert response.status_code == 400

    def test_schema_text_follows_config_file_rules(self, client, tmp_path):
        log = generate_log(SynthSpec(n_cases=100, rule='case_threshold', rule_args=('s1', '0.5'), seed=3))
        lines = dump_schema(log.schema).splitlines()
        lines = ['export ' + lines[0]] + [
            'positive_label = "deviant"  # rule violated' if line.startswith('positive_label') else line
            for line in lines[1:]
        ]
        schema_text = '\n'.join(lines) + '\n'
        (tmp_path / 'quoted.schema').write_text(schema_text, encoding='utf-8')
        assert load_schema(str(tmp_path / 'quoted.schema')) == log.schema

        data = {
            'log': (io.BytesIO(serialize_csv(log).encode('utf-8')), 'quoted.csv'),
            'schema': schema_text,
            'seed': '5',
            'max_prefix': '2',
        }
        response = client.post('/api/bench', data=data, content_type='multipart/form-data')
        assert response.status_code == 200, response.get_data(as_text=True)

    def test_non_utf8_upload(self, client):
        log = generate_log(SynthSpec(n_cases=20, seed=1))
        data = {'log': (io.BytesIO(b'case,activity\n\xff\xfe,A\n'), 'latin.csv'),
                'schema': dump_schema(log.schema), 'seed': '1'}
        response = client.post('/api/bench', data=data, content_type='multipart/form-data')
        assert response.status_code == 400
        assert 'UTF-8' in response.get_json()['error']
