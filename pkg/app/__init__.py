import logging
from flask import Flask
from flask_cors import CORS

logger = logging.getLogger(__name__)


def create_app():
    app = Flask(__name__)
    CORS(app)

    # 加载配置
    app.config.from_object('config.Config')

    # 注册蓝图
    from app.routes import main
    app.register_blueprint(main)

    # 注册命令行: flask --app run xmop ...
    from app.cli import cli
    app.cli.add_command(cli, name='xmop')

    logger.info("xmop service ready")
    return app
