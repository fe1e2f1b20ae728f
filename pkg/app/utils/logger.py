import logging

from app.utils.config import settings

# 配置日志记录器
logger = logging.getLogger('rsb_solver')
logger.setLevel(settings.log_level)
logger.propagate = False

# 创建格式化器
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

if not logger.handlers:
    # 创建控制台处理程序（stderr，stdout 只输出结果）
    console_handler = logging.StreamHandler()
    console_handler.setLevel(settings.log_level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # 创建文件处理程序，RSB_LOG_FILE 为空时不写文件
    if settings.log_file:
        file_handler = logging.FileHandler(settings.log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
